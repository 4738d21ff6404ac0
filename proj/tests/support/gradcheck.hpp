#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dropcast/nn/network.hpp"
#include "dropcast/pipeline.hpp"
#include "dropcast/rng.hpp"

// Central finite-difference checks. Each check draws a random instance from
// `seed`, reduces the op output to a scalar with a random projection and
// returns the relative error over all checked entries (inputs and
// parameters together):
//   max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, 1e-10)
namespace dropcast::testing {

inline constexpr double kFiniteDifferenceStep = 1e-6;

double relative_error(std::span<const double> analytic, std::span<const double> numeric);

// (loss(v + h) - loss(v - h)) / 2h for every entry of `values`, restoring them.
std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& loss,
                                     double h = kFiniteDifferenceStep);

nn::Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0);

double gradcheck_dense(std::uint64_t seed);
double gradcheck_batchnorm(std::uint64_t seed);
double gradcheck_conv1d(std::uint64_t seed);
double gradcheck_avg_pool(std::uint64_t seed);
double gradcheck_bilstm(std::uint64_t seed);
double gradcheck_bce(std::uint64_t seed);
double gradcheck_network(nn::Arch arch, std::uint64_t seed);

// Small network configuration for graph-level checks.
nn::NetConfig tiny_config(nn::Arch arch);

// Random samples matching `config`; sequence rows past seq_len are zero.
std::vector<pipeline::WindowSample> random_samples(const nn::NetConfig& config, int n, Rng& rng);

}  // namespace dropcast::testing
