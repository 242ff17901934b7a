#include <cmath>
#include <limits>
#include <random>

#include "bsnn/data.hpp"
#include "bsnn/energy.hpp"
#include "bsnn/error.hpp"
#include "bsnn/network.hpp"
#include "bsnn/verify/sops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bsnn;
using bsnn::verify::enumerate_sops;

namespace {

Tensor random_spikes(const Shape& s, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution fire(p);
  Tensor t(s);
  for (auto& v : t.data()) v = fire(rng) ? 1.0 : 0.0;
  return t;
}

// FP conv (1->8) -> BN -> LIF -> binary conv (8->8, 4x4, 1024 weights) -> BN -> LIF -> pool -> linear.
NetworkConfig small_config(Variant v) {
  NetworkConfig c;
  c.variant = v;
  c.input_shape = {1, 8, 8};
  c.timesteps = 2;
  c.layers = {LayerDesc::make_conv({1, 8, 3, 3, 1, 1}),
              LayerDesc::make(LayerKind::batchnorm),
              LayerDesc::make(LayerKind::lif),
              v == Variant::fp ? LayerDesc::make_conv({8, 8, 4, 4, 1, 0}) : LayerDesc::make_binary_conv({8, 8, 4, 4, 1, 0}),
              LayerDesc::make(LayerKind::batchnorm),
              LayerDesc::make(LayerKind::lif),
              LayerDesc::make_pool(0),
              LayerDesc::make_linear(3)};
  return c;
}

Dataset blobs(std::size_t per_class, Shape image) {
  BlobOptions b;
  b.classes = 3;
  b.per_class = per_class;
  b.image = image;
  return synthetic_blobs(b);
}

}  // namespace

TEST_CASE("axis fan-out and SOP examples") {
  CHECK(axis_fanout(4, 1, 1, 0) == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(axis_fanout(4, 3, 1, 1) == std::vector<std::size_t>{2, 3, 3, 2});
  CHECK(axis_fanout(4, 2, 2, 0) == std::vector<std::size_t>{1, 1, 1, 1});

  ConvSpec one{1, 8, 1, 1, 1, 0};
  Tensor single({1, 1, 3, 3}, 0.0);
  CHECK(count_sops(single, one) == 0.0);
  single.at(0, 0, 1, 2) = 1.0;
  CHECK(count_sops(single, one) == 8.0);
}

TEST_CASE("SOPs equal brute-force enumeration of reachable connections") {
  std::mt19937_64 rng(17);
  const ConvSpec specs[] = {{2, 3, 3, 3, 1, 1}, {3, 4, 3, 3, 2, 1}, {2, 2, 2, 2, 2, 0}, {1, 5, 3, 2, 1, 0}, {4, 2, 1, 1, 1, 0}};
  for (const auto& s : specs)
    for (double p : {0.0, 0.1, 0.5, 1.0}) {
      Tensor x = random_spikes({3, s.in_channels, 7, 7}, p, rng);
      CHECK(count_sops(x, s) == enumerate_sops(x, s));
    }
}

TEST_CASE("dense MAC examples") {
  // First conv on 2x8x8, 4 out, 3x3, stride 1, pad 1, T = 2.
  ConvSpec s{2, 4, 3, 3, 1, 1};
  CHECK(2.0 * dense_conv_macs(s, {2, 8, 8}) == 9216.0);
}

TEST_CASE("estimate_energy examples") {
  EnergyModel m;
  CHECK(estimate_energy(0.0, 0.0, m) == 0.0);
  CHECK(estimate_energy(1e9, 0.0, m) == 0.9);
  CHECK(estimate_energy(0.0, 1e9, m) == 4.6);
  CHECK(estimate_energy(2e9, 1e9, m) == doctest::Approx(1.8 + 4.6).epsilon(1e-15));
  // Halving the spikes halves SOP energy; MAC energy does not move.
  std::mt19937_64 rng(2);
  ConvSpec s{2, 3, 3, 3, 1, 1};
  Tensor x = random_spikes({1, 2, 6, 6}, 0.4, rng);
  Tensor both({2, 2, 6, 6});
  for (std::size_t i = 0; i < x.size(); ++i) both[i] = x[i], both[x.size() + i] = x[i];
  const double full = count_sops(both, s), half = count_sops(x, s);
  CHECK(half == 0.5 * full);
  const double macs = 12345.0;
  CHECK(estimate_energy(half, macs, m) - estimate_energy(0.0, macs, m) ==
        doctest::Approx(0.5 * (estimate_energy(full, macs, m) - estimate_energy(0.0, macs, m))).epsilon(1e-14));
  EnergyModel bad;
  bad.energy_per_mac_pj = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("model size examples") {
  Network bin(small_config(Variant::binary));
  Network fp(small_config(Variant::fp));
  // 1024 sign bits plus 8 gammas at 32 bits: 128 + 32 bytes.
  CHECK(layer_param_bits(bin, 3) == (128 + 32) * 8);
  CHECK(layer_param_bits(fp, 3) == 1024 * 32);
  CHECK(layer_param_bits(fp, 3) == 32 * 1024 * 1);
  CHECK(layer_param_bits(bin, 1) == 8 * 2 * 64);
  CHECK(layer_param_bits(bin, 7) == (8 * 3 + 3) * 32);
  CHECK(layer_param_bits(bin, 2) == 0);
}

TEST_CASE("desk network size matches a hand tally") {
  DeskOptions o;  // width 16, 3 blocks, 10 classes, T = 2, input 1x12x12
  o.variant = Variant::binary_agmm;
  Network agmm(desk_network(o));
  o.variant = Variant::fp;
  Network fp(desk_network(o));
  const std::size_t first = 16 * 1 * 9 * 32;
  const std::size_t bn = 4 * 16 * 2 * 64;
  const std::size_t head = (16 * 10 + 10) * 32;
  const std::size_t binary_blocks = 3 * (16 * 16 * 9 + 16 * 32);
  const std::size_t alphas = 3 * 2 * 64;
  const std::size_t fp_blocks = 3 * 16 * 16 * 9 * 32;
  CHECK(model_size_bits(agmm) == first + bn + head + binary_blocks + alphas);
  CHECK(model_size_bits(fp) == first + bn + head + fp_blocks);
  const double ratio = static_cast<double>(model_size_bits(agmm)) / static_cast<double>(model_size_bits(fp));
  INFO("binary/fp size ratio " << ratio);
  CHECK(ratio < 0.125);
}

TEST_CASE("firing rates: silent and saturated networks") {
  Dataset d = blobs(4, {1, 8, 8});
  Network silent(small_config(Variant::binary));
  silent.set_threshold(std::numeric_limits<double>::infinity());
  auto r = profile_network(silent, d, EnergyModel{});
  for (const auto& l : r.layers) {
    if (l.has_rate) CHECK(l.firing_rate == 0.0);
    CHECK(l.sops == 0.0);
  }
  CHECK(r.total_sops == 0.0);
  CHECK(r.total_macs > 0.0);

  // Zero first-conv weights and a BN shift above threshold drive every neuron every step.
  Network loud(small_config(Variant::binary));
  for (auto& p : loud.parameters()) {
    if (p.name == "layer0.conv.weight")
      for (auto& w : p.tensor->data()) w = 0.0;
    if (p.name == "layer1.batchnorm.shift")
      for (auto& w : p.tensor->data()) w = 5.0;
  }
  auto q = profile_network(loud, d, EnergyModel{});
  CHECK(q.layers[2].firing_rate == 1.0);
  // Every input position spikes, so SOPs are the full dense count.
  CHECK(q.layers[3].sops == 2.0 * dense_conv_macs({8, 8, 4, 4, 1, 0}, {8, 8, 8}));
}

TEST_CASE("profile totals, rates and SOPs agree with recounts from cached spikes") {
  Dataset d = blobs(5, {2, 6, 6});
  for (Variant v : {Variant::fp, Variant::binary, Variant::binary_agmm}) {
    DeskOptions o;
    o.variant = v;
    o.input_shape = {2, 6, 6};
    o.classes = 3;
    o.width = 3;
    o.blocks = 2;
    Network net(desk_network(o));
    // One batch, so the network caches hold exactly what the profile saw.
    auto rep = profile_network(net, d, EnergyModel{}, InputEncoding::constant, 64);
    const double N = static_cast<double>(d.size());
    double sops = 0.0, macs = 0.0;
    std::size_t bits = 0;
    for (std::size_t i = 0; i < net.size(); ++i) {
      const auto& lp = rep.layers[i];
      sops += lp.sops;
      macs += lp.macs;
      bits += lp.param_bits;
      if (net.kind(i) == LayerKind::lif) {
        const Tensor& s = net.output(i);
        double count = 0.0;
        for (double x : s.data()) count += x;
        CHECK(lp.firing_rate == count / static_cast<double>(s.size()));
        CHECK(lp.firing_rate >= 0.0);
        CHECK(lp.firing_rate <= 1.0);
      }
      const auto k = net.kind(i);
      if ((k == LayerKind::conv || k == LayerKind::binary_conv) && i > 0 && net.kind(i - 1) == LayerKind::lif)
        CHECK(lp.sops == enumerate_sops(net.input_of(i), net.config().layers[i].conv) / N);
      if (k == LayerKind::binary_conv) CHECK(lp.macs == 0.0);
    }
    CHECK(rep.total_sops == doctest::Approx(sops).epsilon(1e-15));
    CHECK(rep.total_macs == doctest::Approx(macs).epsilon(1e-15));
    CHECK(rep.model_bits == bits);
    CHECK(rep.energy_mj == estimate_energy(rep.total_sops, rep.total_macs, EnergyModel{}));
  }
}
