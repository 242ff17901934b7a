#pragma once

// Adaptive gradient modulation: each timestep's feature map is multiplied by a
// sigmoid gate of its scaled mean, X'[t] = sigmoid(alpha[t] * mean(X[t])) X[t].
// Because the gate lies in (0,1), the gradient reaching the binary weights is
// shrunk in mean and variance, which lowers the chance of a sign flip.

#include <cstddef>
#include <span>
#include <vector>

#include "bsnn/stats.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn {

enum class AgmmBackward { exact, approximate };

struct AGMMState {
  Tensor alpha;  // [T], trainable
  /// true: one gate per (t, sample), mean over C,H,W.
  /// false: one gate per t, mean over N,C,H,W.
  bool per_sample = true;

  // Forward cache; indexed by gate slot (t*N + n when per_sample, else t).
  Tensor input;
  std::vector<double> mean;
  std::vector<double> scaled;  // E = alpha[t] * mean
  std::vector<double> gate;    // sigmoid(E)
  std::size_t timesteps = 0;
  std::size_t batch = 0;
  bool valid = false;

  explicit AGMMState(std::size_t timesteps = 1, double alpha_init = 1.0);

  std::size_t gate_count() const { return gate.size(); }
  std::size_t timestep_of_gate(std::size_t slot) const { return per_sample ? slot / batch : slot; }
  /// Mean of the cached gates belonging to timestep t.
  double gate_mean(std::size_t t) const;
};

struct AgmmGrads {
  Tensor input;
  std::vector<double> alpha;
};

double sigmoid(double x);

/// `x` is the folded [T*N, C, H, W] (or [T*N, F]) Bconv-BN output.
Tensor agmm_forward(const Tensor& x, AGMMState& state);

/// Keeps both terms of dX'/dX.
AgmmGrads agmm_backward_exact(const Tensor& grad_out, const AGMMState& state);

/// Drops the mean-path term: grad_X = gate * grad_X'. grad_alpha is exact.
AgmmGrads agmm_backward_approx(const Tensor& grad_out, const AGMMState& state);

AgmmGrads agmm_backward(const Tensor& grad_out, const AGMMState& state, AgmmBackward mode);

struct GateScaling {
  std::size_t timestep = 0;
  double gate_mean = 0.0;
  double mean_before = 0.0;
  double mean_after = 0.0;
  double var_before = 0.0;
  double var_after = 0.0;
  double mean_ratio = 0.0;  // mean_after / mean_before (0 when undefined)
  double var_ratio = 0.0;   // var_after / var_before (0 when undefined)
};

/// Compares gradient statistics collected on either side of the gate, one
/// entry per timestep.
std::vector<GateScaling> gradient_scaling_report(const AGMMState& state, std::span<const RunningStats> before,
                                                 std::span<const RunningStats> after);

}  // namespace bsnn
