#pragma once

#include <span>
#include <vector>

#include "dropcast/nn/tensor.hpp"

namespace dropcast::nn {

// One LSTM direction. Gate blocks inside the 4H axis are ordered
// input, forget, cell candidate, output.
//   wx [in x 4H], wh [H x 4H], b [4H]
struct LstmParams {
  Tensor wx;
  Tensor wh;
  Tensor b;

  int hidden() const { return b.empty() ? 0 : static_cast<int>(b.size()) / 4; }
  int input() const { return wx.empty() ? 0 : wx.dim(0); }
};

// Activations of one direction, one entry per processed step.
struct LstmPassCache {
  std::vector<int> steps;       // time index processed at each position
  std::vector<double> gates;    // [n x 4H], post-nonlinearity i, f, g, o
  std::vector<double> cells;    // [n x H]
  std::vector<double> hiddens;  // [n x H]
};

struct BiLstmCache {
  int seq_len = 0;
  LstmPassCache forward;
  LstmPassCache backward;
};

struct BiLstmOutput {
  std::vector<double> h;  // [forward h at last real step, backward h at step 0]
  bool degenerate = false;
};

// x [length x in]. Only the first seq_len rows enter the recurrences.
BiLstmOutput bilstm_forward(const Tensor& x, int seq_len, const LstmParams& fwd, const LstmParams& bwd,
                            BiLstmCache* cache = nullptr);

// Exact BPTT. Accumulates parameter gradients and returns dL/dx.
Tensor bilstm_backward(const Tensor& x, const BiLstmCache& cache, const LstmParams& fwd, const LstmParams& bwd,
                       std::span<const double> d_out, LstmParams& grad_fwd, LstmParams& grad_bwd);

}  // namespace dropcast::nn
