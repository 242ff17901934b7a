#include <algorithm>
#include <cmath>
#include <random>

#include "bsnn/agmm.hpp"
#include "bsnn/error.hpp"
#include "bsnn/stats.hpp"
#include "bsnn/verify/gradcheck.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bsnn;

namespace {
double logistic_oracle(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

TEST_CASE("sigmoid is stable and accurate") {
  for (double x : {-40.0, -3.0, -0.25, 0.0, 0.5, 2.5, 30.0}) CHECK(sigmoid(x) == doctest::Approx(logistic_oracle(x)).epsilon(1e-15));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("agmm_forward examples") {
  SUBCASE("zero map") {
    AGMMState s(2);
    Tensor y = agmm_forward(Tensor({2, 1, 2, 2}, 0.0), s);
    for (double v : y.data()) CHECK(v == 0.0);
    for (double g : s.gate) CHECK(g == 0.5);
  }
  SUBCASE("alpha = 0 halves the input") {
    std::mt19937_64 rng(1);
    AGMMState s(2, 0.0);
    Tensor x = testing::randn({4, 3, 2, 2}, rng);
    Tensor y = agmm_forward(x, s);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 0.5 * x[i]);
  }
  SUBCASE("alpha = 1, map [1,2,3,4]") {
    AGMMState s(1);
    Tensor y = agmm_forward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), s);
    const double g = logistic_oracle(2.5);
    CHECK(s.mean[0] == 2.5);
    CHECK(s.scaled[0] == 2.5);
    CHECK(s.gate[0] == doctest::Approx(g).epsilon(1e-15));
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(g * (i + 1.0)).epsilon(1e-15));
    CHECK(y[0] == doctest::Approx(0.924142).epsilon(1e-6));
    CHECK(y[3] == doctest::Approx(3.696567).epsilon(1e-6));
  }
}

TEST_CASE("agmm gates are per sample and per timestep") {
  std::mt19937_64 rng(2);
  AGMMState s(3);
  s.alpha = Tensor({3}, {0.5, -1.0, 2.0});
  Tensor x = testing::randn({3 * 2, 2, 3, 3}, rng, 0.3, 1.0);
  agmm_forward(x, s);
  REQUIRE(s.gate_count() == 6);
  for (std::size_t slot = 0; slot < 6; ++slot) {
    double m = 0.0;
    for (std::size_t k = 0; k < 18; ++k) m += x[slot * 18 + k];
    m /= 18.0;
    const std::size_t t = slot / 2;
    CHECK(s.timestep_of_gate(slot) == t);
    CHECK(s.scaled[slot] == s.alpha[t] * s.mean[slot]);
    CHECK(s.mean[slot] == doctest::Approx(m).epsilon(1e-14));
    CHECK(s.gate[slot] > 0.0);
    CHECK(s.gate[slot] < 1.0);
  }
  AGMMState pooled(3);
  pooled.per_sample = false;
  agmm_forward(x, pooled);
  CHECK(pooled.gate_count() == 3);
}

TEST_CASE("agmm backward examples") {
  std::mt19937_64 rng(3);
  AGMMState s(2);
  Tensor x = testing::randn({2 * 2, 3, 2, 2}, rng);
  agmm_forward(x, s);
  auto z = agmm_backward_exact(Tensor(x.shape(), 0.0), s);
  for (double v : z.input.data()) CHECK(v == 0.0);
  for (double v : z.alpha) CHECK(v == 0.0);

  AGMMState s0(2, 0.0);
  agmm_forward(x, s0);
  Tensor g = testing::randn(x.shape(), rng);
  auto ex = agmm_backward_exact(g, s0);
  auto ap = agmm_backward_approx(g, s0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(ex.input[i] == 0.5 * g[i]);
    CHECK(ap.input[i] == ex.input[i]);
  }
  CHECK(ex.alpha[0] != 0.0);
  CHECK(ap.alpha == ex.alpha);
}

TEST_CASE("agmm exact backward passes finite differences") {
  testing::require_all_pass(verify::check_agmm_exact(verify::SuiteOptions{}));
}

TEST_CASE("agmm approximate backward matches the scalar oracle") {
  testing::require_all_pass(verify::check_agmm_approx_oracle(verify::SuiteOptions{}));
}

TEST_CASE("approximate gradient never exceeds the upstream gradient") {
  std::mt19937_64 rng(5);
  AGMMState s(2);
  s.alpha = Tensor({2}, {3.0, -2.0});
  Tensor x = testing::randn({4, 2, 3, 3}, rng, 1.0, 2.0);
  agmm_forward(x, s);
  Tensor g = testing::randn(x.shape(), rng);
  auto ap = agmm_backward_approx(g, s);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::fabs(ap.input[i]) <= std::fabs(g[i]));
}

TEST_CASE("stale or missing cache is rejected") {
  AGMMState s(2);
  CHECK_THROWS_AS(agmm_backward_exact(Tensor({2, 1, 2, 2}), s), StateError);
  agmm_forward(Tensor({2, 1, 2, 2}, 1.0), s);
  CHECK_THROWS_AS(agmm_backward_exact(Tensor({4, 1, 2, 2}), s), StateError);
  s.alpha[0] = 0.3;
  CHECK_THROWS_AS(agmm_backward_approx(Tensor({2, 1, 2, 2}), s), StateError);
  CHECK_THROWS_AS(agmm_forward(Tensor({3, 1, 2, 2}), s), ShapeError);
}

TEST_CASE("dropped term respects the sigmoid-derivative bound") {
  const std::size_t sizes[] = {64, 1024, 4096};
  for (const auto& sz : verify::agmm_gap_study(sizes, 100, 77)) {
    INFO("CHW " << sz.chw << " worst gap/bound " << sz.worst_ratio);
    CHECK(sz.violations == 0);
    CHECK(sz.worst_ratio <= 1.0);
    // The gap is uniform over a sample and equals |dot| g(1-g) |alpha| / CHW.
    for (const auto& smp : sz.samples) CHECK(smp.max_gap <= smp.bound);
  }
}

TEST_CASE("gradient_scaling_report under a constant gate") {
  std::mt19937_64 rng(10);
  AGMMState s(1);
  agmm_forward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), s);
  const double g = s.gate[0];
  RunningStats before, after;
  std::normal_distribution<double> d(0.4, 1.7);
  for (int i = 0; i < 1000; ++i) {
    const double v = d(rng);
    before.push(v);
    after.push(g * v);
  }
  auto rep = gradient_scaling_report(s, std::span(&before, 1), std::span(&after, 1));
  REQUIRE(rep.size() == 1);
  CHECK(rep[0].gate_mean == g);
  CHECK(rep[0].mean_ratio == doctest::Approx(g).epsilon(1e-12));
  CHECK(rep[0].var_ratio == doctest::Approx(g * g).epsilon(1e-12));
}

TEST_CASE("gate 0.5 on sampled normal gradients") {
  // Post-gate mean and variance within 3 standard errors of 0.5 mu and 0.25 sigma^2.
  std::mt19937_64 rng(1234);
  const double mu = 0.8, sigma = 1.5;
  const std::size_t n = 1000000;
  std::normal_distribution<double> d(mu, sigma);
  RunningStats after;
  for (std::size_t i = 0; i < n; ++i) after.push(0.5 * d(rng));
  const double se_mean = 0.5 * sigma / std::sqrt(static_cast<double>(n));
  const double post_var = 0.25 * sigma * sigma;
  const double se_var = post_var * std::sqrt(2.0 / static_cast<double>(n - 1));
  CHECK(std::fabs(after.mean() - 0.5 * mu) <= 3.0 * se_mean);
  CHECK(std::fabs(after.variance() - post_var) <= 3.0 * se_var);
}
