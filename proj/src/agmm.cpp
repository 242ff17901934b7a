#include "bsnn/agmm.hpp"

#include <cmath>
#include <string>

#include "bsnn/error.hpp"

namespace bsnn {

namespace {

struct Layout {
  std::size_t slots;      // number of gates
  std::size_t slot_size;  // elements averaged per gate
  std::size_t sample_size;
};

Layout layout_for(const Tensor& x, std::size_t T, bool per_sample) {
  if (x.empty() || x.rank() < 2) throw ShapeError("AGMM feature map is empty");
  if (x.dim(0) % T != 0)
    throw ShapeError("AGMM leading axis " + std::to_string(x.dim(0)) + " is not a multiple of T=" +
                     std::to_string(T));
  const std::size_t N = x.dim(0) / T;
  const std::size_t sample = x.size() / x.dim(0);
  if (per_sample) return {T * N, sample, sample};
  return {T, N * sample, sample};
}

void check_cache(const Tensor& grad_out, const AGMMState& s) {
  if (!s.valid) throw StateError("AGMM backward called without a forward cache");
  if (grad_out.shape() != s.input.shape())
    throw StateError("AGMM cache is stale: gradient shape " + shape_string(grad_out.shape()) +
                     " does not match cached input " + shape_string(s.input.shape()));
  for (std::size_t k = 0; k < s.gate.size(); ++k) {
    const double a = s.alpha[s.timestep_of_gate(k)];
    if (a * s.mean[k] != s.scaled[k])
      throw StateError("AGMM cache is stale: alpha changed since the forward pass");
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

AGMMState::AGMMState(std::size_t T, double alpha_init) : alpha({T == 0 ? 1 : T}, alpha_init), timesteps(T) {
  if (T == 0) throw ShapeError("AGMM needs at least one timestep");
}

double AGMMState::gate_mean(std::size_t t) const {
  if (!valid) return 0.0;
  if (!per_sample) return gate[t];
  double sum = 0.0;
  for (std::size_t n = 0; n < batch; ++n) sum += gate[t * batch + n];
  return sum / static_cast<double>(batch);
}

Tensor agmm_forward(const Tensor& x, AGMMState& s) {
  const std::size_t T = s.alpha.size();
  const Layout L = layout_for(x, T, s.per_sample);
  s.timesteps = T;
  s.batch = x.dim(0) / T;
  s.mean.assign(L.slots, 0.0);
  s.scaled.assign(L.slots, 0.0);
  s.gate.assign(L.slots, 0.0);
  Tensor out(x.shape());
  for (std::size_t k = 0; k < L.slots; ++k) {
    const std::size_t off = k * L.slot_size;
    double sum = 0.0;
    for (std::size_t i = 0; i < L.slot_size; ++i) sum += x[off + i];
    const double m = sum / static_cast<double>(L.slot_size);
    const double e = s.alpha[s.timestep_of_gate(k)] * m;
    const double g = sigmoid(e);
    s.mean[k] = m;
    s.scaled[k] = e;
    s.gate[k] = g;
    for (std::size_t i = 0; i < L.slot_size; ++i) out[off + i] = g * x[off + i];
  }
  s.input = x;
  s.valid = true;
  return out;
}

namespace {

AgmmGrads backward_impl(const Tensor& grad_out, const AGMMState& s, bool exact) {
  check_cache(grad_out, s);
  const Layout L = layout_for(grad_out, s.timesteps, s.per_sample);
  AgmmGrads g{Tensor(grad_out.shape()), std::vector<double>(s.timesteps, 0.0)};
  for (std::size_t k = 0; k < L.slots; ++k) {
    const std::size_t off = k * L.slot_size;
    const std::size_t t = s.timestep_of_gate(k);
    const double gate = s.gate[k];
    const double dgate = gate * (1.0 - gate);
    double dot = 0.0;
    for (std::size_t i = 0; i < L.slot_size; ++i) dot += grad_out[off + i] * s.input[off + i];
    g.alpha[t] += dot * dgate * s.mean[k];
    const double mean_term = exact ? dot * dgate * s.alpha[t] / static_cast<double>(L.slot_size) : 0.0;
    for (std::size_t i = 0; i < L.slot_size; ++i) g.input[off + i] = grad_out[off + i] * gate + mean_term;
  }
  return g;
}

}  // namespace

AgmmGrads agmm_backward_exact(const Tensor& grad_out, const AGMMState& state) {
  return backward_impl(grad_out, state, true);
}

AgmmGrads agmm_backward_approx(const Tensor& grad_out, const AGMMState& state) {
  return backward_impl(grad_out, state, false);
}

AgmmGrads agmm_backward(const Tensor& grad_out, const AGMMState& state, AgmmBackward mode) {
  return backward_impl(grad_out, state, mode == AgmmBackward::exact);
}

std::vector<GateScaling> gradient_scaling_report(const AGMMState& state, std::span<const RunningStats> before,
                                                 std::span<const RunningStats> after) {
  if (before.size() != after.size())
    throw ShapeError("gradient_scaling_report: before/after timestep counts differ");
  std::vector<GateScaling> rows;
  for (std::size_t t = 0; t < before.size(); ++t) {
    GateScaling r;
    r.timestep = t;
    r.gate_mean = t < state.timesteps ? state.gate_mean(t) : 0.0;
    r.mean_before = before[t].mean();
    r.mean_after = after[t].mean();
    r.var_before = before[t].variance();
    r.var_after = after[t].variance();
    r.mean_ratio = r.mean_before != 0.0 ? r.mean_after / r.mean_before : 0.0;
    r.var_ratio = r.var_before != 0.0 ? r.var_after / r.var_before : 0.0;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace bsnn
