#pragma once

#include <vector>

#include "dropcast/nn/network.hpp"

namespace dropcast::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const NetParams& params, AdamConfig config = {});

  // Returns false and leaves everything untouched when any gradient entry
  // is not finite.
  bool step(NetParams& params, const NetParams& grad);
  long steps_taken() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

}  // namespace dropcast::nn
