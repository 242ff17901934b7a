#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "bsnn/data.hpp"
#include "bsnn/error.hpp"
#include "bsnn/network.hpp"
#include "bsnn/train.hpp"
#include "bsnn/verify/gradcheck.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bsnn;

namespace {

DeskOptions tiny_desk(Variant v, std::uint64_t seed = 3) {
  DeskOptions o;
  o.variant = v;
  o.input_shape = {1, 8, 8};
  o.classes = 4;
  o.width = 6;
  o.blocks = 2;
  o.seed = seed;
  return o;
}

Dataset tiny_blobs(std::size_t per_class, std::uint64_t sample_seed = 0, double noise = 0.3) {
  BlobOptions b;
  b.classes = 4;
  b.per_class = per_class;
  b.image = {1, 8, 8};
  b.noise = noise;
  return synthetic_blobs(b, sample_seed);
}

bool same_record(const EpochRecord& a, const EpochRecord& b) {
  if (a.epoch != b.epoch || a.train_acc != b.train_acc || a.test_acc != b.test_acc || a.loss != b.loss ||
      a.flip_ratio != b.flip_ratio || a.fp_flip_ratio != b.fp_flip_ratio || a.grad_mean != b.grad_mean ||
      a.grad_var != b.grad_var || a.lr != b.lr || a.gate_means != b.gate_means || a.firing_rates != b.firing_rates)
    return false;
  if (a.gate_cells.size() != b.gate_cells.size()) return false;
  for (std::size_t i = 0; i < a.gate_cells.size(); ++i) {
    const auto &x = a.gate_cells[i], &y = b.gate_cells[i];
    if (x.layer != y.layer || x.timestep != y.timestep || x.gate_mean != y.gate_mean ||
        x.mean_before != y.mean_before || x.var_before != y.var_before || x.mean_after != y.mean_after ||
        x.var_after != y.var_after)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("cross_entropy_loss examples") {
  Tensor uniform({3, 5}, 0.7);
  const std::vector<int> y{0, 3, 4};
  auto u = cross_entropy_loss(uniform, y);
  CHECK(u.loss == doctest::Approx(std::log(5.0)).epsilon(1e-15));

  Tensor extreme({2, 3}, {800.0, -800.0, 0.0, -5.0, 900.0, 1.0});
  auto e = cross_entropy_loss(extreme, std::vector<int>{0, 1});
  CHECK(e.loss >= 0.0);
  CHECK(e.loss < 1e-300);
  CHECK(std::isfinite(e.grad[0]));

  CHECK_THROWS_AS(cross_entropy_loss(uniform, std::vector<int>{0, 5, 1}), DomainError);
  CHECK_THROWS_AS(cross_entropy_loss(uniform, std::vector<int>{0, -1, 1}), DomainError);
  CHECK_THROWS_AS(cross_entropy_loss(uniform, std::vector<int>{0, 1}), ShapeError);
}

TEST_CASE("cross_entropy_loss matches the arbitrary-precision oracle") {
  // Frozen from tests/oracles/reference_values.py.
  Tensor logits({3, 4}, {0.3, -1.2, 2.5, 0.0, -0.7, 0.1, 0.4, 1.9, 5.0, -3.0, 0.25, -0.5});
  auto r = cross_entropy_loss(logits, std::vector<int>{2, 0, 0});
  CHECK(std::fabs(r.loss - 1.0633887817681590412) <= 1e-14);
  const double grad[12] = {0.030333468890449654497,   0.0067683117713834454782,  -0.059573367112360255701,
                           0.022471586450527155726,   -0.31640722753793211141,   0.037669741207658972345,
                           0.050848831948267167535,   0.22788865438200597153,    -0.0043017358331438628263,
                           0.00011037780436037510486, 0.0028466810937675084896, 0.0013446769350159792319};
  for (std::size_t i = 0; i < 12; ++i) CHECK(std::fabs(r.grad[i] - grad[i]) <= 1e-15);
}

TEST_CASE("cosine_lr examples") {
  CHECK(cosine_lr(0, 60, 0.1) == 0.1);
  CHECK(cosine_lr(30, 60, 0.1) == doctest::Approx(0.05).epsilon(1e-15));
  // 1 + cos(399pi/400) cancels, so only ~1e-12 relative accuracy is available.
  CHECK(cosine_lr(399, 400, 0.1) == doctest::Approx(1.5421177605143899528e-6).epsilon(1e-10));
  CHECK_THROWS_AS(cosine_lr(60, 60, 0.1), DomainError);
}

TEST_CASE("sgd_step examples") {
  Tensor w({1}, {0.5});
  ParamRef p{"w", &w, 0, false};
  OptimizerState opt;

  SUBCASE("momentum 0 is the plain update") {
    opt.momentum = 0.0;
    w.zero_grad();
    w.grad()[0] = 2.0;
    sgd_step(std::span(&p, 1), opt, 0.1, true);
    CHECK(w[0] == doctest::Approx(0.5 - 0.2).epsilon(1e-15));
  }
  SUBCASE("zero gradient leaves the parameter alone") {
    w.zero_grad();
    sgd_step(std::span(&p, 1), opt, 0.1, true);
    CHECK(w[0] == 0.5);
  }
  SUBCASE("two momentum steps follow the recurrence") {
    // b1 = 1, w1 = 0.5 - 0.1*1; b2 = 0.9*1 + 0.5, w2 = w1 - 0.1*1.4.
    w.zero_grad();
    w.grad()[0] = 1.0;
    sgd_step(std::span(&p, 1), opt, 0.1, true);
    CHECK(w[0] == doctest::Approx(0.4).epsilon(1e-15));
    w.grad()[0] = 0.5;
    sgd_step(std::span(&p, 1), opt, 0.1, true);
    CHECK(opt.buffers[0][0] == doctest::Approx(1.4).epsilon(1e-15));
    CHECK(w[0] == doctest::Approx(0.26).epsilon(1e-14));
  }
  SUBCASE("binary latents are clamped") {
    ParamRef lat{"l", &w, 0, true};
    w.zero_grad();
    w.grad()[0] = -20.0;
    sgd_step(std::span(&lat, 1), opt, 0.1, true);
    CHECK(w[0] == 1.0);
  }
}

TEST_CASE("network build validation and initialization") {
  NetworkConfig bad = desk_network(tiny_desk(Variant::binary_agmm));
  // Drop the first AGMM layer after a binary conv + BN pair.
  for (std::size_t i = 0; i < bad.layers.size(); ++i)
    if (bad.layers[i].kind == LayerKind::agmm) {
      bad.layers.erase(bad.layers.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  CHECK_FALSE(bad.violations().empty());
  CHECK_THROWS_AS(Network{bad}, ConfigError);

  NetworkConfig fp_first = desk_network(tiny_desk(Variant::binary));
  fp_first.layers.front() = LayerDesc::make_binary_conv(fp_first.layers.front().conv);
  CHECK_THROWS_AS(fp_first.validate(), ConfigError);

  Network fp(desk_network(tiny_desk(Variant::fp)));
  Network bin(desk_network(tiny_desk(Variant::binary)));
  auto pf = fp.parameters(), pb = bin.parameters();
  REQUIRE(pf.size() == pb.size());
  for (std::size_t i = 0; i < pf.size(); ++i) CHECK(*pf[i].tensor == *pb[i].tensor);

  Network again(desk_network(tiny_desk(Variant::binary)));
  auto pa = again.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].tensor == *pb[i].tensor);

  Network agmm(desk_network(tiny_desk(Variant::binary_agmm)));
  for (auto& p : agmm.parameters())
    if (p.name.find("alpha") != std::string::npos)
      for (double a : p.tensor->data()) CHECK(a == 1.0);
    else if (p.name.find("batchnorm.scale") != std::string::npos)
      for (double a : p.tensor->data()) CHECK(a == 1.0);
    else if (p.name.find("batchnorm.shift") != std::string::npos)
      for (double a : p.tensor->data()) CHECK(a == 0.0);
}

TEST_CASE("forward shape contract, NaN detection and zero backward") {
  Dataset d = tiny_blobs(2);
  for (std::size_t T : {1u, 2u, 4u}) {
    auto o = tiny_desk(Variant::binary_agmm);
    o.timesteps = T;
    Network net(desk_network(o));
    Tensor logits = net.forward(encode_constant(d.images, T), true);
    CHECK(logits.shape() == Shape{d.size(), 4});
    if (T == 2) {
      net.zero_grad();
      net.backward(Tensor(logits.shape(), 0.0));
      for (auto& p : net.parameters())
        for (double g : p.tensor->grad()) CHECK(g == 0.0);
    }
  }
  Network net(desk_network(tiny_desk(Variant::fp)));
  Tensor x = encode_constant(d.images, 2);
  x[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    net.forward(x, true);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  Network fresh(desk_network(tiny_desk(Variant::fp)));
  CHECK_THROWS_AS(fresh.backward(Tensor({2, 4})), StateError);
}

TEST_CASE("network forward and backward match the scalar oracle") {
  testing::require_all_pass(verify::check_network_oracle(verify::SuiteOptions{}));
}

TEST_CASE("untrained network is near chance") {
  BlobOptions b;  // 10 classes, 60 per class
  Dataset d = synthetic_blobs(b);
  for (Variant v : {Variant::fp, Variant::binary, Variant::binary_agmm}) {
    DeskOptions o;
    o.variant = v;
    Network net(desk_network(o));
    const double acc = evaluate(net, d);
    const double ci = 3.0 * std::sqrt(0.1 * 0.9 / static_cast<double>(d.size()));
    INFO(to_string(v) << " accuracy " << acc);
    CHECK(std::fabs(acc - 0.1) <= ci);
  }
}

TEST_CASE("training is deterministic under a fixed seed") {
  Dataset train = tiny_blobs(10, 0), test = tiny_blobs(5, 1);
  TrainOptions t;
  t.epochs = 3;
  t.batch_size = 16;
  t.seed = 11;
  auto run = [&] {
    Network net(desk_network(tiny_desk(Variant::binary_agmm)));
    return Trainer(net, t).fit(train, &test);
  };
  auto a = run(), b = run();
  REQUIRE(a.epochs.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) CHECK(same_record(a.epochs[e], b.epochs[e]));
  CHECK(a.epochs[0].lr == 0.1);
  CHECK(a.epochs[2].lr == doctest::Approx(cosine_lr(2, 3, 0.1)));

  TrainOptions bernoulli = t;
  bernoulli.encoding = InputEncoding::bernoulli;
  Network n1(desk_network(tiny_desk(Variant::binary))), n2(desk_network(tiny_desk(Variant::binary)));
  auto c = Trainer(n1, bernoulli).fit(train, &test), d = Trainer(n2, bernoulli).fit(train, &test);
  for (std::size_t e = 0; e < 3; ++e) CHECK(same_record(c.epochs[e], d.epochs[e]));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Dataset train = tiny_blobs(8), test = tiny_blobs(6, 2);
  TrainOptions t;
  t.epochs = 2;
  t.batch_size = 8;
  Network net(desk_network(tiny_desk(Variant::binary_agmm)));
  Trainer(net, t).fit(train, &test);
  const auto path = testing::temp_path("ckpt.bin");
  save_checkpoint(net, path);

  // A different seed changes the initial weights but not the layout.
  Network other(desk_network(tiny_desk(Variant::binary_agmm, 99)));
  load_checkpoint(other, path);
  auto a = net.state_buffers(), b = other.state_buffers();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  Tensor x = encode_constant(test.images, 2);
  CHECK(net.forward(x, false) == other.forward(x, false));
  CHECK(evaluate(net, test) == evaluate(other, test));

  const auto path2 = testing::temp_path("ckpt2.bin");
  save_checkpoint(other, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(s1.substr(0, 4) == "BSNN");

  Network wrong(desk_network(tiny_desk(Variant::binary)));
  CHECK_THROWS_AS(load_checkpoint(wrong, path), IoError);

  const auto trunc = testing::temp_path("ckpt_trunc.bin");
  std::ofstream(trunc, std::ios::binary) << s1.substr(0, s1.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(other, trunc), IoError);
  const auto junk = testing::temp_path("ckpt_junk.bin");
  std::ofstream(junk, std::ios::binary) << "XXXX" << s1.substr(4);
  CHECK_THROWS_AS(load_checkpoint(other, junk), IoError);
  CHECK_THROWS_AS(load_checkpoint(other, testing::temp_path("missing.bin")), IoError);
  for (const auto& p : {path, path2, trunc, junk}) std::filesystem::remove(p);
}

TEST_CASE("approximate AGMM backward never raises the per-timestep gradient magnitude") {
  auto o = tiny_desk(Variant::binary_agmm);
  NetworkConfig cfg = desk_network(o);
  cfg.agmm_backward = AgmmBackward::approximate;
  cfg.agmm_per_sample = false;  // one gate per timestep, so after = g * before exactly
  Network net(cfg);
  Dataset d = tiny_blobs(6);
  net.set_telemetry(true);
  net.telemetry().clear();
  Tensor logits = net.forward(encode_constant(d.images, 2), true);
  auto loss = cross_entropy_loss(logits, d.labels);
  net.zero_grad();
  net.backward(loss.grad);
  REQUIRE_FALSE(net.telemetry().gates.empty());
  for (const auto& [layer, g] : net.telemetry().gates)
    for (std::size_t t = 0; t < g.before.size(); ++t) {
      CHECK(std::fabs(g.after[t].mean()) <= std::fabs(g.before[t].mean()));
      CHECK(g.after[t].variance() <= g.before[t].variance());
    }
}

TEST_CASE("every variant overfits a 40-sample set") {
  // Loss must fall below 10% of its first-epoch mean within 200 epochs.
  Dataset d = tiny_blobs(10);
  for (Variant v : {Variant::fp, Variant::binary, Variant::binary_agmm}) {
    Network net(desk_network(tiny_desk(v)));
    TrainOptions t;
    t.epochs = 200;
    t.batch_size = 8;
    auto rec = Trainer(net, t).fit(d, nullptr);
    const double first = rec.epochs.front().loss;
    double best = first;
    for (const auto& e : rec.epochs) best = std::min(best, e.loss);
    INFO(to_string(v) << " first " << first << " best " << best << " last " << rec.epochs.back().loss);
    CHECK(best < 0.1 * first);
  }
}
