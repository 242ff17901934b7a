#pragma once

// Weight-sign-flip instrumentation and the normal-model flip probability.
//
// Under plain SGD, w' = w - eta*g with g ~ N(mu, sigma^2), a positive weight
// flips iff g > w/eta, so P = 1 - Phi((w/eta - mu)/sigma); a negative weight
// flips iff g <= w/eta, so P = Phi((w/eta - mu)/sigma).

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsnn/stats.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn {

struct LayerSigns {
  std::string name;
  std::size_t count = 0;
  std::vector<std::uint64_t> negative;  // bit i set iff weight i < 0

  static LayerSigns capture(std::string name, std::span<const double> weights);
};

struct SignSnapshot {
  std::size_t epoch = 0;
  std::vector<LayerSigns> layers;
};

/// Fraction of weights whose sign differs between two snapshots, pooled over
/// all layers. Throws ShapeError when the layer sets differ.
double flip_ratio(const SignSnapshot& prev, const SignSnapshot& curr);

/// Standard normal CDF and upper tail, both accurate in the far tails.
double normal_cdf(double z);
double normal_sf(double z);

struct FlipModelInput {
  double omega = 0.0;
  double eta = 0.1;
  double mu = 0.0;
  double sigma = 1.0;
};

double flip_probability_analytic(const FlipModelInput& in);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;  // sqrt(p_hat (1 - p_hat) / n)
  std::size_t samples = 0;
};

inline constexpr std::size_t kMinMonteCarloSamples = 10000;

MonteCarloEstimate flip_probability_montecarlo(const FlipModelInput& in, std::size_t samples,
                                               std::uint64_t seed);

struct MonotonicityReport {
  bool pass = true;
  std::size_t comparisons = 0;
  std::size_t strict = 0;
  std::vector<std::string> violations;
};

/// Checks that P is nondecreasing in mu (per sigma) and in sigma (per mu) for
/// a fixed omega/eta that exceeds every mu on the grid. With `require_strict`
/// every neighbouring pair must increase strictly.
MonotonicityReport monotonicity_check(std::span<const double> mus, std::span<const double> sigmas,
                                      double omega_over_eta, bool require_strict = false);

/// Weight-gradient statistics keyed by (layer, timestep).
class GradientStats {
 public:
  void collect(std::size_t layer, std::size_t timestep, std::span<const double> grads);
  void merge(const GradientStats& other);
  const RunningStats& at(std::size_t layer, std::size_t timestep) const;
  bool contains(std::size_t layer, std::size_t timestep) const;
  /// Pooled over every cell.
  RunningStats total() const;
  const std::map<std::pair<std::size_t, std::size_t>, RunningStats>& cells() const { return cells_; }
  void clear() { cells_.clear(); }

 private:
  std::map<std::pair<std::size_t, std::size_t>, RunningStats> cells_;
};

GradientStats collect_gradient_stats(std::size_t layer, std::span<const Tensor> per_timestep_grads);

}  // namespace bsnn
