#pragma once

#include <span>

#include "dropcast/exec.hpp"

// Dense linear-algebra kernels in matched pairs: a plain serial reference
// and an OpenMP version. Each output element is accumulated in the same
// order by both, so their results are bit-identical.
namespace dropcast::nn::kernels {

// y[r,c] = b[c] + sum_k x[r,k] * w[k,c];  x: rows x inner, w: inner x cols.
void affine_serial(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y, int rows, int inner, int cols);
void affine_parallel(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                     std::span<double> y, int rows, int inner, int cols);

// dx[r,k] = sum_c dy[r,c] * w[k,c].
void backprop_input_serial(std::span<const double> dy, std::span<const double> w, std::span<double> dx, int rows,
                           int inner, int cols);
void backprop_input_parallel(std::span<const double> dy, std::span<const double> w, std::span<double> dx,
                             int rows, int inner, int cols);

// dw[k,c] += sum_r x[r,k] * dy[r,c];  db[c] += sum_r dy[r,c].
void accumulate_weight_grad_serial(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                                   std::span<double> db, int rows, int inner, int cols);
void accumulate_weight_grad_parallel(std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                                     std::span<double> db, int rows, int inner, int cols);

inline void affine(Exec exec, std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y, int rows, int inner, int cols) {
  exec == Exec::parallel ? affine_parallel(x, w, b, y, rows, inner, cols)
                         : affine_serial(x, w, b, y, rows, inner, cols);
}
inline void backprop_input(Exec exec, std::span<const double> dy, std::span<const double> w, std::span<double> dx,
                           int rows, int inner, int cols) {
  exec == Exec::parallel ? backprop_input_parallel(dy, w, dx, rows, inner, cols)
                         : backprop_input_serial(dy, w, dx, rows, inner, cols);
}
inline void accumulate_weight_grad(Exec exec, std::span<const double> x, std::span<const double> dy,
                                   std::span<double> dw, std::span<double> db, int rows, int inner, int cols) {
  exec == Exec::parallel ? accumulate_weight_grad_parallel(x, dy, dw, db, rows, inner, cols)
                         : accumulate_weight_grad_serial(x, dy, dw, db, rows, inner, cols);
}

// Runs body(i) for i in [0, n); iterations must be independent.
template <class Body>
void for_each_index(Exec exec, int n, Body&& body) {
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) body(i);
  } else {
    for (int i = 0; i < n; ++i) body(i);
  }
}

}  // namespace dropcast::nn::kernels
