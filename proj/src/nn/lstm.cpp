#include "dropcast/nn/lstm.hpp"

#include <cmath>
#include <string>

#include "dropcast/error.hpp"
#include "dropcast/nn/layers.hpp"

namespace dropcast::nn {

namespace {

void check_params(const LstmParams& p, int in) {
  const int h = p.hidden();
  if (h < 1 || p.wx.dim(0) != in || p.wx.dim(1) != 4 * h || p.wh.dim(0) != h || p.wh.dim(1) != 4 * h)
    throw Error("shape mismatch: lstm parameters do not match input width " + std::to_string(in));
}

// Runs one direction over `steps` and returns the final hidden state.
std::vector<double> run_pass(const Tensor& x, const std::vector<int>& steps, const LstmParams& p,
                             LstmPassCache* cache) {
  const int h = p.hidden(), in = x.dim(1), g4 = 4 * h;
  const std::size_t n = steps.size();
  std::vector<double> h_prev(static_cast<std::size_t>(h), 0.0), c_prev(static_cast<std::size_t>(h), 0.0);
  std::vector<double> z(static_cast<std::size_t>(g4));
  if (cache) {
    cache->steps = steps;
    cache->gates.assign(n * g4, 0.0);
    cache->cells.assign(n * h, 0.0);
    cache->hiddens.assign(n * h, 0.0);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const double* xt = x.data() + static_cast<std::size_t>(steps[s]) * in;
    for (int j = 0; j < g4; ++j) z[j] = p.b[j];
    for (int k = 0; k < in; ++k) {
      const double xv = xt[k];
      const double* wk = p.wx.data() + static_cast<std::size_t>(k) * g4;
      for (int j = 0; j < g4; ++j) z[j] += xv * wk[j];
    }
    for (int k = 0; k < h; ++k) {
      const double hv = h_prev[k];
      const double* wk = p.wh.data() + static_cast<std::size_t>(k) * g4;
      for (int j = 0; j < g4; ++j) z[j] += hv * wk[j];
    }
    for (int j = 0; j < h; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[h + j]);
      const double gg = std::tanh(z[2 * h + j]);
      const double og = sigmoid(z[3 * h + j]);
      const double c = fg * c_prev[j] + ig * gg;
      const double hv = og * std::tanh(c);
      if (cache) {
        double* gs = cache->gates.data() + s * g4;
        gs[j] = ig;
        gs[h + j] = fg;
        gs[2 * h + j] = gg;
        gs[3 * h + j] = og;
        cache->cells[s * h + j] = c;
        cache->hiddens[s * h + j] = hv;
      }
      c_prev[j] = c;
      h_prev[j] = hv;
    }
  }
  return h_prev;
}

void backprop_pass(const Tensor& x, const LstmPassCache& cache, const LstmParams& p, std::span<const double> dh_last,
                   LstmParams& grad, Tensor& dx) {
  const int h = p.hidden(), in = x.dim(1), g4 = 4 * h;
  const std::size_t n = cache.steps.size();
  std::vector<double> dh(dh_last.begin(), dh_last.end());
  std::vector<double> dc(static_cast<std::size_t>(h), 0.0);
  std::vector<double> dz(static_cast<std::size_t>(g4));
  for (std::size_t s = n; s-- > 0;) {
    const double* gs = cache.gates.data() + s * g4;
    const double* cs = cache.cells.data() + s * h;
    const double* c_prev = s > 0 ? cache.cells.data() + (s - 1) * h : nullptr;
    const double* h_prev = s > 0 ? cache.hiddens.data() + (s - 1) * h : nullptr;
    for (int j = 0; j < h; ++j) {
      const double ig = gs[j], fg = gs[h + j], gg = gs[2 * h + j], og = gs[3 * h + j];
      const double tc = std::tanh(cs[j]);
      const double dcj = dc[j] + dh[j] * og * (1.0 - tc * tc);
      const double cp = c_prev ? c_prev[j] : 0.0;
      dz[j] = dcj * gg * ig * (1.0 - ig);
      dz[h + j] = dcj * cp * fg * (1.0 - fg);
      dz[2 * h + j] = dcj * ig * (1.0 - gg * gg);
      dz[3 * h + j] = dh[j] * tc * og * (1.0 - og);
      dc[j] = dcj * fg;
    }
    const std::size_t t = static_cast<std::size_t>(cache.steps[s]);
    const double* xt = x.data() + t * in;
    double* dxt = dx.data() + t * in;
    for (int j = 0; j < g4; ++j) grad.b[j] += dz[j];
    for (int k = 0; k < in; ++k) {
      const double* wk = p.wx.data() + static_cast<std::size_t>(k) * g4;
      double* gk = grad.wx.data() + static_cast<std::size_t>(k) * g4;
      const double xv = xt[k];
      double acc = 0.0;
      for (int j = 0; j < g4; ++j) {
        gk[j] += xv * dz[j];
        acc += wk[j] * dz[j];
      }
      dxt[k] += acc;
    }
    for (int k = 0; k < h; ++k) {
      const double* wk = p.wh.data() + static_cast<std::size_t>(k) * g4;
      double acc = 0.0;
      if (h_prev) {
        double* gk = grad.wh.data() + static_cast<std::size_t>(k) * g4;
        const double hv = h_prev[k];
        for (int j = 0; j < g4; ++j) {
          gk[j] += hv * dz[j];
          acc += wk[j] * dz[j];
        }
      } else {
        for (int j = 0; j < g4; ++j) acc += wk[j] * dz[j];
      }
      dh[k] = acc;
    }
  }
}

}  // namespace

BiLstmOutput bilstm_forward(const Tensor& x, int seq_len, const LstmParams& fwd, const LstmParams& bwd,
                            BiLstmCache* cache) {
  const int in = x.dim(1);
  check_params(fwd, in);
  check_params(bwd, in);
  if (seq_len < 0 || seq_len > x.dim(0)) throw Error("shape mismatch: lstm seq_len exceeds sequence length");
  BiLstmOutput out;
  const int hf = fwd.hidden(), hb = bwd.hidden();
  if (cache) cache->seq_len = seq_len;
  if (seq_len == 0) {
    out.h.assign(static_cast<std::size_t>(hf + hb), 0.0);
    out.degenerate = true;
    if (cache) cache->forward = cache->backward = LstmPassCache{};
    return out;
  }
  std::vector<int> ascending(static_cast<std::size_t>(seq_len)), descending(static_cast<std::size_t>(seq_len));
  for (int t = 0; t < seq_len; ++t) {
    ascending[t] = t;
    descending[t] = seq_len - 1 - t;
  }
  auto hf_last = run_pass(x, ascending, fwd, cache ? &cache->forward : nullptr);
  auto hb_last = run_pass(x, descending, bwd, cache ? &cache->backward : nullptr);
  out.h = std::move(hf_last);
  out.h.insert(out.h.end(), hb_last.begin(), hb_last.end());
  return out;
}

Tensor bilstm_backward(const Tensor& x, const BiLstmCache& cache, const LstmParams& fwd, const LstmParams& bwd,
                       std::span<const double> d_out, LstmParams& grad_fwd, LstmParams& grad_bwd) {
  Tensor dx({x.dim(0), x.dim(1)});
  if (cache.seq_len == 0) return dx;
  const auto hf = static_cast<std::size_t>(fwd.hidden());
  backprop_pass(x, cache.forward, fwd, d_out.subspan(0, hf), grad_fwd, dx);
  backprop_pass(x, cache.backward, bwd, d_out.subspan(hf), grad_bwd, dx);
  return dx;
}

}  // namespace dropcast::nn
