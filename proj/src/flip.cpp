#include "bsnn/flip.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "bsnn/error.hpp"

namespace bsnn {

LayerSigns LayerSigns::capture(std::string name, std::span<const double> weights) {
  LayerSigns s;
  s.name = std::move(name);
  s.count = weights.size();
  s.negative.assign((weights.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] < 0.0) s.negative[i / 64] |= std::uint64_t{1} << (i % 64);
  return s;
}

double flip_ratio(const SignSnapshot& prev, const SignSnapshot& curr) {
  if (prev.layers.size() != curr.layers.size())
    throw ShapeError("flip_ratio: snapshots cover " + std::to_string(prev.layers.size()) + " vs " +
                     std::to_string(curr.layers.size()) + " layers");
  std::size_t flipped = 0, total = 0;
  for (std::size_t l = 0; l < prev.layers.size(); ++l) {
    const auto& a = prev.layers[l];
    const auto& b = curr.layers[l];
    if (a.name != b.name || a.count != b.count)
      throw ShapeError("flip_ratio: layer " + std::to_string(l) + " differs (" + a.name + " vs " + b.name + ")");
    for (std::size_t w = 0; w < a.negative.size(); ++w) flipped += std::popcount(a.negative[w] ^ b.negative[w]);
    total += a.count;
  }
  if (total == 0) return 0.0;
  return static_cast<double>(flipped) / static_cast<double>(total);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double flip_probability_analytic(const FlipModelInput& in) {
  if (!(in.sigma > 0.0)) throw DomainError("flip probability needs sigma > 0");
  if (!(in.eta > 0.0)) throw DomainError("flip probability needs eta > 0");
  const double z = (in.omega / in.eta - in.mu) / in.sigma;
  return in.omega < 0.0 ? normal_cdf(z) : normal_sf(z);
}

MonteCarloEstimate flip_probability_montecarlo(const FlipModelInput& in, std::size_t samples,
                                               std::uint64_t seed) {
  if (!(in.sigma > 0.0)) throw DomainError("flip probability needs sigma > 0");
  if (samples < kMinMonteCarloSamples)
    throw DomainError("Monte Carlo flip estimate needs at least " + std::to_string(kMinMonteCarloSamples) +
                      " samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> grad(in.mu, in.sigma);
  const bool negative = in.omega < 0.0;
  std::size_t flips = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double next = in.omega - in.eta * grad(rng);
    if ((next < 0.0) != negative) ++flips;
  }
  MonteCarloEstimate r;
  r.samples = samples;
  r.estimate = static_cast<double>(flips) / static_cast<double>(samples);
  r.standard_error = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(samples));
  return r;
}

MonotonicityReport monotonicity_check(std::span<const double> mus, std::span<const double> sigmas,
                                      double omega_over_eta, bool require_strict) {
  if (mus.empty() || sigmas.empty()) throw DomainError("monotonicity grid is empty");
  for (std::size_t i = 1; i < mus.size(); ++i)
    if (!(mus[i] > mus[i - 1])) throw DomainError("mu grid must be strictly increasing");
  for (std::size_t i = 1; i < sigmas.size(); ++i)
    if (!(sigmas[i] > sigmas[i - 1])) throw DomainError("sigma grid must be strictly increasing");
  for (double s : sigmas)
    if (!(s > 0.0)) throw DomainError("sigma grid values must be positive");
  if (omega_over_eta < 0.0)
    throw DomainError("monotonicity check covers omega >= 0; mirror mu and omega for negative weights");
  if (!(omega_over_eta > mus.back())) {
    std::ostringstream os;
    os << "omega/eta = " << omega_over_eta << " must exceed every mu on the grid (max " << mus.back()
       << "); below that the tail argument reverses and P is not monotone in sigma";
    throw DomainError(os.str());
  }
  auto P = [&](double mu, double sigma) {
    return flip_probability_analytic({omega_over_eta, 1.0, mu, sigma});
  };
  MonotonicityReport rep;
  auto compare = [&](double lo, double hi, const char* axis, double mu, double sigma) {
    ++rep.comparisons;
    if (hi > lo) {
      ++rep.strict;
      return;
    }
    if (hi == lo && !require_strict) return;
    rep.pass = false;
    std::ostringstream os;
    os << "P not " << (require_strict ? "strictly increasing" : "nondecreasing") << " in " << axis
       << " at mu=" << mu << " sigma=" << sigma << " (" << lo << " -> " << hi << ")";
    rep.violations.push_back(os.str());
  };
  for (double s : sigmas)
    for (std::size_t i = 1; i < mus.size(); ++i) compare(P(mus[i - 1], s), P(mus[i], s), "mu", mus[i], s);
  for (double m : mus)
    for (std::size_t j = 1; j < sigmas.size(); ++j)
      compare(P(m, sigmas[j - 1]), P(m, sigmas[j]), "sigma", m, sigmas[j]);
  return rep;
}

void GradientStats::collect(std::size_t layer, std::size_t timestep, std::span<const double> grads) {
  cells_[{layer, timestep}].push(grads);
}

void GradientStats::merge(const GradientStats& other) {
  for (const auto& [key, st] : other.cells_) cells_[key].merge(st);
}

const RunningStats& GradientStats::at(std::size_t layer, std::size_t timestep) const {
  auto it = cells_.find({layer, timestep});
  if (it == cells_.end())
    throw DomainError("no gradient statistics for layer " + std::to_string(layer) + " timestep " +
                      std::to_string(timestep));
  return it->second;
}

bool GradientStats::contains(std::size_t layer, std::size_t timestep) const {
  return cells_.count({layer, timestep}) > 0;
}

RunningStats GradientStats::total() const {
  RunningStats all;
  for (const auto& [key, st] : cells_) all.merge(st);
  return all;
}

GradientStats collect_gradient_stats(std::size_t layer, std::span<const Tensor> per_timestep_grads) {
  GradientStats gs;
  for (std::size_t t = 0; t < per_timestep_grads.size(); ++t) gs.collect(layer, t, per_timestep_grads[t].data());
  return gs;
}

}  // namespace bsnn
