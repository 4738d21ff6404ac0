#pragma once

#include <span>
#include <vector>

#include "dropcast/exec.hpp"
#include "dropcast/nn/tensor.hpp"

namespace dropcast::nn {

// y = x W + b with x [batch x in], W [in x out], b [out].
struct DenseParams {
  Tensor w;
  Tensor b;
};

Tensor dense_forward(const Tensor& x, const DenseParams& p, Exec exec = Exec::serial);
// Accumulates dW, db into `grad` and returns dL/dx.
Tensor dense_backward(const Tensor& x, const DenseParams& p, const Tensor& dy, DenseParams& grad,
                      Exec exec = Exec::serial);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
};

struct BatchNormStats {
  Tensor mean;
  Tensor var;
};

struct BatchNormCache {
  Tensor x_hat;                 // normalized input
  std::vector<double> inv_std;  // per feature
  std::vector<double> mean;     // batch statistics
  std::vector<double> var;      // biased batch variance
  int batch = 0;
};

// Train mode: per-feature batch mean / variance. Throws Error for a batch of one.
Tensor batchnorm_forward_train(const Tensor& x, const BatchNormParams& p, BatchNormCache& cache);
Tensor batchnorm_forward_infer(const Tensor& x, const BatchNormParams& p, const BatchNormStats& running);
Tensor batchnorm_backward(const BatchNormCache& cache, const BatchNormParams& p, const Tensor& dy,
                          BatchNormParams& grad);
// running = (1 - momentum) running + momentum batch, with the unbiased
// batch variance.
void update_running_stats(BatchNormStats& running, const BatchNormCache& cache,
                          double momentum = kBatchNormMomentum);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& pre_activation, const Tensor& dy);

// Cross-correlation over time with zero same-padding and stride 1.
// x [length x in_channels], w [kernel x in_channels x out_channels], b [out].
// Steps at or beyond seq_len read as zero and produce zero output, so a
// padded sequence convolves exactly like its unpadded prefix.
struct ConvParams {
  Tensor w;
  Tensor b;
};

Tensor conv1d_forward(const Tensor& x, int seq_len, const ConvParams& p);
Tensor conv1d_backward(const Tensor& x, int seq_len, const ConvParams& p, const Tensor& dy, ConvParams& grad);

struct PoolResult {
  std::vector<double> pooled;
  bool degenerate = false;  // seq_len == 0; pooled is all zero
};

// Mean over the first seq_len rows of f [length x channels].
PoolResult avg_pool_time(const Tensor& f, int seq_len);
Tensor avg_pool_time_backward(std::span<const double> d_pooled, int seq_len, int length);

struct ClassWeights {
  double low = 1.0;
  double high = 1.0;
};

inline constexpr double kProbabilityClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  double d_loss_d_p = 0.0;
  bool clamped = false;
};

// -w_label [y log p + (1 - y) log(1 - p)]; p outside
// [1e-7, 1 - 1e-7] is clamped and flagged.
BceResult weighted_bce(double p, int label, ClassWeights weights);

double sigmoid(double z);

}  // namespace dropcast::nn
