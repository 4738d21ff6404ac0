#include "dropcast/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dropcast/error.hpp"
#include "dropcast/nn/kernels.hpp"

namespace dropcast::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(std::string("shape mismatch: ") + what);
}

}  // namespace

Tensor dense_forward(const Tensor& x, const DenseParams& p, Exec exec) {
  require(x.shape().size() == 2 && p.w.shape().size() == 2, "dense expects 2-D input and weights");
  const int rows = x.dim(0), inner = x.dim(1), cols = p.w.dim(1);
  require(p.w.dim(0) == inner, "dense input width vs weight rows");
  require(static_cast<int>(p.b.size()) == cols, "dense bias width");
  Tensor y({rows, cols});
  kernels::affine(exec, x.values(), p.w.values(), p.b.values(), y.values(), rows, inner, cols);
  return y;
}

Tensor dense_backward(const Tensor& x, const DenseParams& p, const Tensor& dy, DenseParams& grad, Exec exec) {
  const int rows = x.dim(0), inner = x.dim(1), cols = p.w.dim(1);
  require(dy.dim(0) == rows && dy.dim(1) == cols, "dense upstream gradient");
  require(grad.w.same_shape(p.w) && grad.b.same_shape(p.b), "dense gradient buffers");
  kernels::accumulate_weight_grad(exec, x.values(), dy.values(), grad.w.values(), grad.b.values(), rows, inner,
                                  cols);
  Tensor dx({rows, inner});
  kernels::backprop_input(exec, dy.values(), p.w.values(), dx.values(), rows, inner, cols);
  return dx;
}

Tensor batchnorm_forward_train(const Tensor& x, const BatchNormParams& p, BatchNormCache& cache) {
  const int rows = x.dim(0), cols = x.dim(1);
  if (rows < 2) throw Error("batch norm in train mode needs a batch of at least 2");
  require(static_cast<int>(p.gamma.size()) == cols && static_cast<int>(p.beta.size()) == cols,
          "batch norm parameter width");
  cache.batch = rows;
  cache.mean.assign(static_cast<std::size_t>(cols), 0.0);
  cache.var.assign(static_cast<std::size_t>(cols), 0.0);
  cache.inv_std.assign(static_cast<std::size_t>(cols), 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) cache.mean[c] += x(r, c);
  for (int c = 0; c < cols; ++c) cache.mean[c] /= rows;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double d = x(r, c) - cache.mean[c];
      cache.var[c] += d * d;
    }
  for (int c = 0; c < cols; ++c) {
    cache.var[c] /= rows;
    cache.inv_std[c] = 1.0 / std::sqrt(cache.var[c] + kBatchNormEps);
  }
  cache.x_hat = Tensor({rows, cols});
  Tensor y({rows, cols});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double xh = (x(r, c) - cache.mean[c]) * cache.inv_std[c];
      cache.x_hat(r, c) = xh;
      y(r, c) = p.gamma[c] * xh + p.beta[c];
    }
  return y;
}

Tensor batchnorm_forward_infer(const Tensor& x, const BatchNormParams& p, const BatchNormStats& running) {
  const int rows = x.dim(0), cols = x.dim(1);
  require(static_cast<int>(running.mean.size()) == cols, "batch norm running stats width");
  Tensor y({rows, cols});
  for (int c = 0; c < cols; ++c) {
    const double inv_std = 1.0 / std::sqrt(running.var[c] + kBatchNormEps);
    for (int r = 0; r < rows; ++r) y(r, c) = p.gamma[c] * (x(r, c) - running.mean[c]) * inv_std + p.beta[c];
  }
  return y;
}

Tensor batchnorm_backward(const BatchNormCache& cache, const BatchNormParams& p, const Tensor& dy,
                          BatchNormParams& grad) {
  const int rows = cache.batch, cols = static_cast<int>(cache.mean.size());
  require(dy.dim(0) == rows && dy.dim(1) == cols, "batch norm upstream gradient");
  Tensor dx({rows, cols});
  for (int c = 0; c < cols; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int r = 0; r < rows; ++r) {
      sum_dy += dy(r, c);
      sum_dy_xhat += dy(r, c) * cache.x_hat(r, c);
    }
    grad.beta[c] += sum_dy;
    grad.gamma[c] += sum_dy_xhat;
    const double scale = p.gamma[c] * cache.inv_std[c] / rows;
    for (int r = 0; r < rows; ++r)
      dx(r, c) = scale * (rows * dy(r, c) - sum_dy - cache.x_hat(r, c) * sum_dy_xhat);
  }
  return dx;
}

void update_running_stats(BatchNormStats& running, const BatchNormCache& cache, double momentum) {
  const double unbias = static_cast<double>(cache.batch) / (cache.batch - 1);
  for (std::size_t c = 0; c < cache.mean.size(); ++c) {
    running.mean[c] = (1.0 - momentum) * running.mean[c] + momentum * cache.mean[c];
    running.var[c] = (1.0 - momentum) * running.var[c] + momentum * cache.var[c] * unbias;
  }
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(pre_activation[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

Tensor conv1d_forward(const Tensor& x, int seq_len, const ConvParams& p) {
  require(x.shape().size() == 2 && p.w.shape().size() == 3, "conv1d expects [T x C] input and [K x C x O] kernels");
  const int length = x.dim(0), in_ch = x.dim(1);
  const int kernel = p.w.dim(0), out_ch = p.w.dim(2);
  require(p.w.dim(1) == in_ch, "conv1d input channels");
  require(static_cast<int>(p.b.size()) == out_ch, "conv1d bias width");
  require(seq_len >= 0 && seq_len <= length, "conv1d seq_len");
  const int half = kernel / 2;
  Tensor y({length, out_ch});
  for (int t = 0; t < seq_len; ++t) {
    double* yt = y.data() + static_cast<std::size_t>(t) * out_ch;
    for (int o = 0; o < out_ch; ++o) yt[o] = p.b[o];
    for (int k = 0; k < kernel; ++k) {
      const int src = t + k - half;
      if (src < 0 || src >= seq_len) continue;
      const double* xs = x.data() + static_cast<std::size_t>(src) * in_ch;
      const double* wk = p.w.data() + static_cast<std::size_t>(k) * in_ch * out_ch;
      for (int c = 0; c < in_ch; ++c) {
        const double xv = xs[c];
        const double* wkc = wk + static_cast<std::size_t>(c) * out_ch;
        for (int o = 0; o < out_ch; ++o) yt[o] += xv * wkc[o];
      }
    }
  }
  return y;
}

Tensor conv1d_backward(const Tensor& x, int seq_len, const ConvParams& p, const Tensor& dy, ConvParams& grad) {
  const int length = x.dim(0), in_ch = x.dim(1);
  const int kernel = p.w.dim(0), out_ch = p.w.dim(2);
  require(dy.dim(0) == length && dy.dim(1) == out_ch, "conv1d upstream gradient");
  require(grad.w.same_shape(p.w) && grad.b.same_shape(p.b), "conv1d gradient buffers");
  const int half = kernel / 2;
  Tensor dx({length, in_ch});
  for (int t = 0; t < seq_len; ++t) {
    const double* dyt = dy.data() + static_cast<std::size_t>(t) * out_ch;
    for (int o = 0; o < out_ch; ++o) grad.b[o] += dyt[o];
    for (int k = 0; k < kernel; ++k) {
      const int src = t + k - half;
      if (src < 0 || src >= seq_len) continue;
      const double* xs = x.data() + static_cast<std::size_t>(src) * in_ch;
      double* dxs = dx.data() + static_cast<std::size_t>(src) * in_ch;
      const std::size_t wk = static_cast<std::size_t>(k) * in_ch * out_ch;
      for (int c = 0; c < in_ch; ++c) {
        const double* wkc = p.w.data() + wk + static_cast<std::size_t>(c) * out_ch;
        double* gkc = grad.w.data() + wk + static_cast<std::size_t>(c) * out_ch;
        const double xv = xs[c];
        double acc = 0.0;
        for (int o = 0; o < out_ch; ++o) {
          gkc[o] += xv * dyt[o];
          acc += wkc[o] * dyt[o];
        }
        dxs[c] += acc;
      }
    }
  }
  return dx;
}

PoolResult avg_pool_time(const Tensor& f, int seq_len) {
  const int length = f.dim(0), channels = f.dim(1);
  require(seq_len >= 0 && seq_len <= length, "avg_pool_time seq_len");
  PoolResult out;
  out.pooled.assign(static_cast<std::size_t>(channels), 0.0);
  if (seq_len == 0) {
    out.degenerate = true;
    return out;
  }
  for (int t = 0; t < seq_len; ++t)
    for (int c = 0; c < channels; ++c) out.pooled[c] += f(t, c);
  for (auto& v : out.pooled) v /= seq_len;
  return out;
}

Tensor avg_pool_time_backward(std::span<const double> d_pooled, int seq_len, int length) {
  const int channels = static_cast<int>(d_pooled.size());
  Tensor df({length, channels});
  if (seq_len == 0) return df;
  for (int t = 0; t < seq_len; ++t)
    for (int c = 0; c < channels; ++c) df(t, c) = d_pooled[c] / seq_len;
  return df;
}

BceResult weighted_bce(double p, int label, ClassWeights weights) {
  BceResult r;
  if (!(p >= kProbabilityClamp && p <= 1.0 - kProbabilityClamp)) {
    r.clamped = true;
    p = std::clamp(std::isnan(p) ? 0.5 : p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  }
  const double w = label ? weights.high : weights.low;
  if (label) {
    r.loss = -w * std::log(p);
    r.d_loss_d_p = -w / p;
  } else {
    r.loss = -w * std::log1p(-p);
    r.d_loss_d_p = w / (1.0 - p);
  }
  return r;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace dropcast::nn
