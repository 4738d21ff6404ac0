#include "dropcast/nn/kernels.hpp"

#include <cstddef>

namespace dropcast::nn::kernels {

namespace {

inline void affine_row(const double* x, const double* w, const double* b, double* y, int inner, int cols) {
  for (int c = 0; c < cols; ++c) y[c] = b[c];
  for (int k = 0; k < inner; ++k) {
    const double xv = x[k];
    const double* wk = w + static_cast<std::size_t>(k) * cols;
    for (int c = 0; c < cols; ++c) y[c] += xv * wk[c];
  }
}

inline void backprop_row(const double* dy, const double* w, double* dx, int inner, int cols) {
  for (int k = 0; k < inner; ++k) {
    const double* wk = w + static_cast<std::size_t>(k) * cols;
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += dy[c] * wk[c];
    dx[k] = s;
  }
}

inline void weight_grad_row(const double* x, const double* dy, double* dwk, int k, int rows, int inner,
                            int cols) {
  for (int r = 0; r < rows; ++r) {
    const double xv = x[static_cast<std::size_t>(r) * inner + k];
    const double* dyr = dy + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) dwk[c] += xv * dyr[c];
  }
}

inline void bias_grad(const double* dy, double* db, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) db[c] += dy[static_cast<std::size_t>(r) * cols + c];
}

}  // namespace

void affine_serial(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y, int rows, int inner, int cols) {
  for (int r = 0; r < rows; ++r)
    affine_row(x.data() + static_cast<std::size_t>(r) * inner, w.data(), b.data(),
               y.data() + static_cast<std::size_t>(r) * cols, inner, cols);
}

void affine_parallel(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                     std::span<double> y, int rows, int inner, int cols) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r)
    affine_row(x.data() + static_cast<std::size_t>(r) * inner, w.data(), b.data(),
               y.data() + static_cast<std::size_t>(r) * cols, inner, cols);
}

void backprop_input_serial(std::span<const double> dy, std::span<const double> w, std::span<double> dx, int rows,
                           int inner, int cols) {
  for (int r = 0; r < rows; ++r)
    backprop_row(dy.data() + static_cast<std::size_t>(r) * cols, w.data(),
                 dx.data() + static_cast<std::size_t>(r) * inner, inner, cols);
}

void backprop_input_parallel(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
                             int rows, int inner, int cols) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r)
    backprop_row(dy.data() + static_cast<std::size_t>(r) * cols, w.data(),
                 dx.data() + static_cast<std::size_t>(r) * inner, inner, cols);
}

void accumulate_weight_grad_serial(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                                   std::span<double> db, int rows, int inner, int cols) {
  for (int k = 0; k < inner; ++k)
    weight_grad_row(x.data(), dy.data(), dw.data() + static_cast<std::size_t>(k) * cols, k, rows, inner, cols);
  bias_grad(dy.data(), db.data(), rows, cols);
}

void accumulate_weight_grad_parallel(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                                     std::span<double> db, int rows, int inner, int cols) {
#pragma omp parallel for schedule(static)
  for (int k = 0; k < inner; ++k)
    weight_grad_row(x.data(), dy.data(), dw.data() + static_cast<std::size_t>(k) * cols, k, rows, inner, cols);
  bias_grad(dy.data(), db.data(), rows, cols);
}

}  // namespace dropcast::nn::kernels
