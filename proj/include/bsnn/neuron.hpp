#pragma once

#include <cstddef>

#include "bsnn/tensor.hpp"

namespace bsnn {

/// Leaky integrate-and-fire parameters with hard reset.
struct LIFConfig {
  double tau = 0.5;   // leak factor in (0,1]
  double v_th = 1.0;  // firing threshold
  double beta = 1.0;  // half-width of the triangular surrogate
  /// When false, the backward pass also differentiates the reset product
  /// U*(1-S) through the spike, adding -U*surrogate(U) to dU_post/dU.
  bool detach_reset = true;

  void validate() const;
};

/// Per-timestep membrane potentials (pre-reset) and spikes, both folded as
/// [T*N, ...] in t-major order.
struct LIFCache {
  Tensor potential;
  Tensor spikes;
  std::size_t timesteps = 0;
  bool valid = false;
};

/// Unrolls the neuron over `timesteps` chunks of the leading axis of `input`.
/// U[t] = tau*U_post[t-1] + X[t]; S[t] = [U[t] >= v_th]; U_post[t] = U[t](1-S[t]).
Tensor lif_forward(const Tensor& input, std::size_t timesteps, const LIFConfig& config,
                   LIFCache* cache = nullptr);

/// Elementwise max(0, beta - |u - v_th|).
Tensor surrogate_grad(const Tensor& potential, const LIFConfig& config);
double surrogate_grad(double u, const LIFConfig& config);

/// Reverse-time recursion over the cached trace.
Tensor lif_backward(const Tensor& grad_spikes, const LIFCache& cache, const LIFConfig& config);

}  // namespace bsnn
