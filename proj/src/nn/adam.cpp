#include "dropcast/nn/adam.hpp"

#include <cmath>

#include "dropcast/error.hpp"

namespace dropcast::nn {

Adam::Adam(const NetParams& params, AdamConfig config) : config_(config) {
  for (const auto& [name, t] : params.named_tensors()) {
    m_.emplace_back(t->shape());
    v_.emplace_back(t->shape());
  }
}

bool Adam::step(NetParams& params, const NetParams& grad) {
  auto p = params.named_tensors();
  auto g = grad.named_tensors();
  if (p.size() != m_.size() || g.size() != m_.size()) throw Error("optimizer state does not match parameters");
  for (const auto& [name, t] : g)
    if (!t->all_finite()) return false;

  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < p.size(); ++k) {
    Tensor& w = *p[k].second;
    const Tensor& d = *g[k].second;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * d[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * d[i] * d[i];
      w[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
  return true;
}

}  // namespace dropcast::nn
