#pragma once

// Gradient verification: central finite differences for the differentiable
// primitives, and scalar-tape oracles for everything that passes through a
// spike or a sign.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bsnn/network.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn::verify {

struct CheckResult {
  std::string name;
  double error = 0.0;      // worst error observed
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

/// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|); 0 when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

/// Central differences of f around x with step h.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h = 1e-5);

struct SuiteOptions {
  std::uint64_t seed = 42;
  std::size_t scale = 1;   // multiplies the batch extent of every problem
  double fd_step = 1e-5;
  double fd_tolerance = 1e-6;
  double oracle_tolerance = 1e-10;
  /// Mutation sanity: negate the analytic conv input gradient before
  /// comparing. The conv check must then fail.
  bool mutate_conv_backward = false;
};

// Finite-difference suites, one result per checked gradient.
std::vector<CheckResult> check_conv(const SuiteOptions& o);
std::vector<CheckResult> check_batchnorm(const SuiteOptions& o);
std::vector<CheckResult> check_linear(const SuiteOptions& o);
std::vector<CheckResult> check_avgpool(const SuiteOptions& o);
std::vector<CheckResult> check_add(const SuiteOptions& o);
std::vector<CheckResult> check_agmm_exact(const SuiteOptions& o);

// Scalar-oracle suites.
std::vector<CheckResult> check_lif_oracle(const SuiteOptions& o);
std::vector<CheckResult> check_binary_conv_oracle(const SuiteOptions& o);
std::vector<CheckResult> check_agmm_approx_oracle(const SuiteOptions& o);
std::vector<CheckResult> check_network_oracle(const SuiteOptions& o);

std::vector<CheckResult> run_all(const SuiteOptions& o);

/// Logits and parameter gradients of a network, recomputed on the scalar tape
/// from the network's current parameters. The loss is sum(grad_logits *
/// logits), so the parameter gradients are the vector-Jacobian product with
/// `grad_logits`. Runs the network in training mode (batch statistics).
struct OracleResult {
  std::vector<double> logits;                   // [N, K]
  std::vector<std::vector<double>> grads;       // parallel to net.parameters()
};
OracleResult oracle_network(Network& net, const Tensor& input, const Tensor& grad_logits);

/// Exact-vs-approximate AGMM input-gradient gap study.
struct GapSample {
  std::size_t chw = 0;
  double alpha = 0.0;
  double max_gap = 0.0;     // worst element over the sample
  double bound = 0.0;       // 0.25 |alpha| |sum grad*x| / CHW for that sample
  double grad_scale = 0.0;  // max |exact grad_X|
};
struct GapSize {
  std::size_t chw = 0;
  std::vector<GapSample> samples;
  double median_gap = 0.0;
  double worst_ratio = 0.0;  // max over samples of max_gap / bound
  std::size_t violations = 0;
};
/// `trials` random inputs per size; X and grad standard normal, alpha uniform
/// in [-1, 1]. Each trial is a single gate over a [1, chw, 1, 1] map (only the
/// element count enters the gate).
std::vector<GapSize> agmm_gap_study(std::span<const std::size_t> chw_sizes, std::size_t trials, std::uint64_t seed);

}  // namespace bsnn::verify
