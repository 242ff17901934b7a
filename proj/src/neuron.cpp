#include "bsnn/neuron.hpp"

#include <cmath>
#include <string>

#include "bsnn/error.hpp"

namespace bsnn {

void LIFConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw DomainError("LIF tau must lie in (0,1], got " + std::to_string(tau));
  if (!(v_th > 0.0)) throw DomainError("LIF threshold must be positive");
  if (!(beta > 0.0)) throw DomainError("LIF surrogate width must be positive");
}

namespace {

std::size_t step_size(const Tensor& t, std::size_t timesteps) {
  if (t.empty()) throw ShapeError("LIF input sequence is empty");
  if (timesteps == 0 || t.dim(0) % timesteps != 0)
    throw ShapeError("LIF leading axis " + std::to_string(t.dim(0)) + " is not a multiple of T=" +
                     std::to_string(timesteps));
  return t.size() / timesteps;
}

}  // namespace

Tensor lif_forward(const Tensor& input, std::size_t timesteps, const LIFConfig& config, LIFCache* cache) {
  // tau == 0 is accepted here so the decoupled-timestep case can be exercised.
  if (!(config.tau >= 0.0 && config.tau <= 1.0) || !(config.v_th > 0.0) || !(config.beta > 0.0))
    config.validate();
  const std::size_t step = step_size(input, timesteps);
  Tensor spikes(input.shape());
  Tensor potential(input.shape());
  std::vector<double> u(step, 0.0);
  for (std::size_t t = 0; t < timesteps; ++t) {
    const std::size_t off = t * step;
    for (std::size_t i = 0; i < step; ++i) {
      const double v = config.tau * u[i] + input[off + i];
      const double s = v >= config.v_th ? 1.0 : 0.0;
      potential[off + i] = v;
      spikes[off + i] = s;
      u[i] = v * (1.0 - s);
    }
  }
  if (cache) {
    cache->potential = std::move(potential);
    cache->spikes = spikes;
    cache->timesteps = timesteps;
    cache->valid = true;
  }
  return spikes;
}

double surrogate_grad(double u, const LIFConfig& config) {
  return std::max(0.0, config.beta - std::abs(u - config.v_th));
}

Tensor surrogate_grad(const Tensor& potential, const LIFConfig& config) {
  Tensor out(potential.shape());
  for (std::size_t i = 0; i < potential.size(); ++i) out[i] = surrogate_grad(potential[i], config);
  return out;
}

Tensor lif_backward(const Tensor& grad_spikes, const LIFCache& cache, const LIFConfig& config) {
  if (!cache.valid) throw StateError("lif_backward called without a forward cache");
  if (grad_spikes.shape() != cache.spikes.shape())
    throw ShapeError("lif_backward gradient shape " + shape_string(grad_spikes.shape()) +
                     " does not match cached trace " + shape_string(cache.spikes.shape()));
  const std::size_t T = cache.timesteps;
  const std::size_t step = step_size(grad_spikes, T);
  Tensor grad_x(grad_spikes.shape());
  // carry[i] holds dL/dU[t+1] * dU[t+1]/dU_post[t] = tau * dL/dU[t+1]
  std::vector<double> carry(step, 0.0);
  for (std::size_t tt = T; tt-- > 0;) {
    const std::size_t off = tt * step;
    for (std::size_t i = 0; i < step; ++i) {
      const double u = cache.potential[off + i];
      const double s = cache.spikes[off + i];
      const double sg = surrogate_grad(u, config);
      double reset = 1.0 - s;
      if (!config.detach_reset) reset -= u * sg;
      const double gu = grad_spikes[off + i] * sg + carry[i] * reset;
      grad_x[off + i] = gu;
      carry[i] = config.tau * gu;
    }
  }
  return grad_x;
}

}  // namespace bsnn
