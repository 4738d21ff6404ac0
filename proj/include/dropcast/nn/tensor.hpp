#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace dropcast::nn {

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(static_cast<std::size_t>(
                  std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>())),
              fill) {}

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  // 2-D access.
  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace dropcast::nn
