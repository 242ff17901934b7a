#include "bsnn/train.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "bsnn/binarize.hpp"
#include "bsnn/error.hpp"

namespace bsnn {

LossResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be [N,K], got " + shape_string(logits.shape()));
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != N)
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch " + std::to_string(N));
  LossResult r{0.0, Tensor(logits.shape())};
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw DomainError("label " + std::to_string(y) + " outside [0," + std::to_string(K) + ")");
    const double* z = logits.data().data() + n * K;
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(z[k] - zmax);
    const double lse = zmax + std::log(sum);
    r.loss += lse - z[y];
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(z[k] - lse);
      r.grad[n * K + k] = (p - (static_cast<std::size_t>(y) == k ? 1.0 : 0.0)) / static_cast<double>(N);
    }
  }
  r.loss /= static_cast<double>(N);
  return r;
}

double cosine_lr(std::size_t epoch, std::size_t total, double lr0) {
  if (epoch >= total)
    throw DomainError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0," + std::to_string(total) + ")");
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total)));
}

void sgd_step(std::span<const ParamRef> params, OptimizerState& opt, double lr, bool clamp) {
  if (opt.buffers.size() != params.size()) opt.buffers.assign(params.size(), {});
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p].tensor;
    auto g = w.grad();
    auto& buf = opt.buffers[p];
    if (buf.size() != w.size()) buf.assign(w.size(), 0.0);
    for (std::size_t k = 0; k < w.size(); ++k) {
      buf[k] = opt.momentum * buf[k] + g[k];
      w[k] -= lr * buf[k];
    }
    if (clamp && params[p].binary_latent) clamp_latent(w);
  }
}

Tensor encode_batch(const Tensor& images, std::size_t timesteps, InputEncoding encoding, std::uint64_t seed) {
  return encoding == InputEncoding::constant ? encode_constant(images, timesteps)
                                             : encode_bernoulli(images, timesteps, seed);
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t w[2];
  seq.generate(w, w + 2);
  return (std::uint64_t{w[0]} << 32) | w[1];
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const double* z = logits.data().data() + n * K;
    const auto best = static_cast<std::size_t>(std::max_element(z, z + K) - z);
    if (best == static_cast<std::size_t>(labels[n])) ++correct;
  }
  return correct;
}

}  // namespace

double evaluate(Network& net, const Dataset& data, InputEncoding encoding, std::uint64_t seed, std::size_t batch_size) {
  data.validate();
  net.set_telemetry(false);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - b);
    const Tensor images = slice_leading(data.images, b, n);
    const Tensor x = encode_batch(images, net.config().timesteps, encoding, mix(seed, b));
    const Tensor logits = net.forward(x, false);
    correct += count_correct(logits, std::span<const int>(data.labels).subspan(b, n));
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Trainer::Trainer(Network& net, TrainOptions options) : net_(net), options_(options) {
  if (options_.epochs == 0) throw DomainError("training needs at least one epoch");
  if (options_.batch_size == 0) throw DomainError("batch size must be positive");
  opt_.lr0 = options_.lr0;
  opt_.momentum = options_.momentum;
  opt_.total_epochs = options_.epochs;
  last_ = net_.snapshot(0);
  last_fp_ = net_.fp_snapshot(0);
}

EpochRecord Trainer::train_epoch(const Dataset& train, const Dataset* test) {
  train.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t e = opt_.epoch;
  const double lr = cosine_lr(e, opt_.total_epochs, opt_.lr0);
  const std::size_t T = net_.config().timesteps;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix(options_.seed, e + 1));
  std::shuffle(order.begin(), order.end(), rng);

  net_.telemetry().clear();
  net_.set_telemetry(true);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  auto params = net_.parameters();
  for (std::size_t b = 0; b < order.size(); b += options_.batch_size) {
    const std::size_t n = std::min(options_.batch_size, order.size() - b);
    if (n < 2) continue;  // batch statistics need more than one sample
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                 order.begin() + static_cast<std::ptrdiff_t>(b + n));
    std::vector<int> labels(n);
    for (std::size_t k = 0; k < n; ++k) labels[k] = train.labels[idx[k]];
    const Tensor x = encode_batch(train.gather(idx), T, options_.encoding, mix(options_.seed ^ 0xb5ad4eceda1ce2a9ULL, e * 1000003 + b));
    net_.zero_grad();
    const Tensor logits = net_.forward(x, true);
    auto loss = cross_entropy_loss(logits, labels);
    net_.backward(loss.grad);
    sgd_step(params, opt_, lr, net_.config().clamp_latent);
    loss_sum += loss.loss * static_cast<double>(n);
    correct += count_correct(logits, labels);
  }
  net_.set_telemetry(false);

  EpochRecord r;
  r.epoch = e + 1;
  r.lr = lr;
  r.loss = loss_sum / static_cast<double>(train.size());
  r.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());

  const auto& tel = net_.telemetry();
  const RunningStats pooled = tel.weight_grads.total();
  r.grad_mean = pooled.mean();
  r.grad_var = pooled.variance();
  for (std::size_t layer : net_.tracked_layers()) {
    RunningStats s;
    for (std::size_t t = 0; t < T; ++t)
      if (tel.weight_grads.contains(layer, t)) s.merge(tel.weight_grads.at(layer, t));
    r.layer_grads.emplace_back(layer, s);
  }
  if (!tel.gates.empty()) {
    r.gate_means.assign(T, 0.0);
    for (const auto& [layer, g] : tel.gates) {
      for (std::size_t t = 0; t < T; ++t) {
        r.gate_means[t] += g.value[t].mean() / static_cast<double>(tel.gates.size());
        r.gate_cells.push_back({layer, t, g.value[t].mean(), g.before[t].mean(), g.before[t].variance(),
                                g.after[t].mean(), g.after[t].variance()});
      }
    }
  }
  for (const auto& [layer, f] : tel.firing)
    r.firing_rates.emplace_back(layer, f.opportunities > 0.0 ? f.spikes / f.opportunities : 0.0);

  const SignSnapshot snap = net_.snapshot(e + 1);
  const SignSnapshot snap_fp = net_.fp_snapshot(e + 1);
  r.flip_ratio = flip_ratio(last_, snap);
  r.fp_flip_ratio = flip_ratio(last_fp_, snap_fp);
  last_ = snap;
  last_fp_ = snap_fp;

  r.test_acc = test ? evaluate(net_, *test, options_.encoding, mix(options_.seed, 0x7e57)) : 0.0;
  ++opt_.epoch;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

TrainRecord Trainer::fit(const Dataset& train, const Dataset* test) {
  TrainRecord rec;
  rec.variant = to_string(net_.config().variant);
  rec.seed = options_.seed;
  while (opt_.epoch < opt_.total_epochs) rec.epochs.push_back(train_epoch(train, test));
  return rec;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
bool get_le(std::istream& in, U& v) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) return false;
  v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return true;
}

}  // namespace

void save_checkpoint(Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open checkpoint for writing");
  out.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, net.config().digest());
  const auto bufs = net.state_buffers();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bufs.size()));
  for (const auto* b : bufs) {
    put_le<std::uint64_t>(out, b->size());
    for (double v : *b) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError(path, "checkpoint write failed");
}

void load_checkpoint(Network& net, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw IoError(path, "not a BSNN checkpoint");
  std::uint32_t version = 0;
  std::uint64_t digest = 0;
  std::uint32_t count = 0;
  if (!get_le(in, version) || !get_le(in, digest) || !get_le(in, count)) throw IoError(path, "truncated checkpoint header");
  if (version != kCheckpointVersion)
    throw IoError(path, "unsupported checkpoint version " + std::to_string(version));
  if (digest != net.config().digest()) throw IoError(path, "checkpoint was written for a different network configuration");
  auto bufs = net.state_buffers();
  if (count != bufs.size())
    throw IoError(path, "checkpoint holds " + std::to_string(count) + " tensors, network expects " +
                            std::to_string(bufs.size()));
  std::vector<std::vector<double>> staged(bufs.size());
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    std::uint64_t len = 0;
    if (!get_le(in, len)) throw IoError(path, "truncated checkpoint");
    if (len != bufs[i]->size()) throw IoError(path, "tensor " + std::to_string(i) + " has the wrong length");
    staged[i].resize(len);
    for (auto& v : staged[i]) {
      std::uint64_t bits = 0;
      if (!get_le(in, bits)) throw IoError(path, "truncated checkpoint");
      v = std::bit_cast<double>(bits);
    }
  }
  for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i] = std::move(staged[i]);
}

}  // namespace bsnn
