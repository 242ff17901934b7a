#pragma once

#include <cstddef>
#include <span>

namespace bsnn {

/// Single-pass mean/variance accumulator (Welford) with exact merging
/// (Chan et al. pairwise update). Variance is the population variance.
class RunningStats {
 public:
  void push(double x);
  void push(std::span<const double> xs);
  void merge(const RunningStats& other);

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 0 ? m2_ / static_cast<double>(n_) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace bsnn
