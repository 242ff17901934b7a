#include "bsnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bsnn/error.hpp"

namespace bsnn {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::fp: return "fp";
    case Variant::binary: return "binary";
    case Variant::binary_agmm: return "binary-agmm";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "fp") return Variant::fp;
  if (s == "binary") return Variant::binary;
  if (s == "binary-agmm") return Variant::binary_agmm;
  throw ConfigError("unknown variant '" + s + "' (expected fp, binary or binary-agmm)");
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::binary_conv: return "binary-conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::lif: return "lif";
    case LayerKind::agmm: return "agmm";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::linear: return "linear";
    case LayerKind::skip_add: return "skip-add";
  }
  return "?";
}

namespace {

bool is_weighted(LayerKind k) {
  return k == LayerKind::conv || k == LayerKind::binary_conv || k == LayerKind::linear;
}

// Per-sample shape inference; appends problems to `errs`.
std::vector<Shape> infer_shapes(const NetworkConfig& c, std::vector<std::string>& errs) {
  std::vector<Shape> shapes;
  Shape cur = c.input_shape;
  auto fail = [&](std::size_t i, const std::string& m) {
    errs.push_back("layer " + std::to_string(i) + " (" + to_string(c.layers[i].kind) + "): " + m);
  };
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    const auto& L = c.layers[i];
    switch (L.kind) {
      case LayerKind::conv:
      case LayerKind::binary_conv:
        if (cur.size() != 3) {
          fail(i, "expects a [C,H,W] input, got " + shape_string(cur));
          break;
        }
        if (L.conv.in_channels != cur[0]) {
          fail(i, "in_channels " + std::to_string(L.conv.in_channels) + " but input has " + std::to_string(cur[0]));
          break;
        }
        try {
          L.conv.validate();
          cur = {L.conv.out_channels, L.conv.out_extent(cur[1], L.conv.kernel_h),
                 L.conv.out_extent(cur[2], L.conv.kernel_w)};
        } catch (const Error& e) {
          fail(i, e.what());
        }
        break;
      case LayerKind::avgpool:
        if (cur.size() != 3) {
          fail(i, "expects a [C,H,W] input");
          break;
        }
        if (L.pool_kernel == 0) {
          if (cur[1] != cur[2]) fail(i, "global pooling needs a square map, got " + shape_string(cur));
          cur = {cur[0], 1, 1};
        } else if (cur[1] % L.pool_kernel || cur[2] % L.pool_kernel) {
          fail(i, "kernel " + std::to_string(L.pool_kernel) + " does not divide " + shape_string(cur));
        } else {
          cur = {cur[0], cur[1] / L.pool_kernel, cur[2] / L.pool_kernel};
        }
        break;
      case LayerKind::linear:
        if (L.out_features == 0) fail(i, "out_features must be positive");
        cur = {L.out_features};
        break;
      case LayerKind::skip_add:
        if (L.skip_source >= i)
          fail(i, "skip source " + std::to_string(L.skip_source) + " must precede the layer");
        else if (shapes[L.skip_source] != cur)
          fail(i, "skip source shape " + shape_string(shapes[L.skip_source]) + " differs from " + shape_string(cur));
        break;
      case LayerKind::batchnorm:
      case LayerKind::lif:
      case LayerKind::agmm:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<std::string> NetworkConfig::violations() const {
  std::vector<std::string> errs;
  if (layers.empty()) {
    errs.push_back("network has no layers");
    return errs;
  }
  if (timesteps == 0) errs.push_back("timesteps must be at least 1");
  if (input_shape.size() != 3) errs.push_back("input shape must be [C,H,W], got " + shape_string(input_shape));
  try {
    lif.validate();
  } catch (const Error& e) {
    errs.push_back(e.what());
  }
  auto fail = [&](std::size_t i, const std::string& m) {
    errs.push_back("layer " + std::to_string(i) + " (" + to_string(layers[i].kind) + "): " + m);
  };

  std::size_t first_weighted = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (is_weighted(layers[i].kind)) {
      first_weighted = i;
      break;
    }
  if (first_weighted == layers.size() || layers[first_weighted].kind != LayerKind::conv)
    errs.push_back("the first weighted layer must be a full-precision conv");
  if (layers.back().kind != LayerKind::linear) errs.push_back("the last layer must be the full-precision linear readout");

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto k = layers[i].kind;
    if (k == LayerKind::linear && i + 1 != layers.size()) fail(i, "linear layers are only allowed as the final readout");
    if (variant == Variant::fp) {
      if (k == LayerKind::binary_conv) fail(i, "binary conv not allowed in the fp variant");
      if (k == LayerKind::agmm) fail(i, "agmm not allowed in the fp variant");
    } else {
      if (k == LayerKind::conv && i != first_weighted)
        fail(i, "only the first conv stays full precision in binary variants");
      if (k == LayerKind::agmm && variant == Variant::binary) fail(i, "agmm not allowed in the vanilla binary variant");
    }
    if (k == LayerKind::binary_conv) {
      if (i + 1 >= layers.size() || layers[i + 1].kind != LayerKind::batchnorm)
        fail(i, "binary conv must be followed by batchnorm");
      else if (variant == Variant::binary_agmm &&
               (i + 2 >= layers.size() || layers[i + 2].kind != LayerKind::agmm))
        fail(i, "binary conv + batchnorm must be followed by an agmm layer");
    }
  }
  if (errs.empty()) infer_shapes(*this, errs);
  return errs;
}

void NetworkConfig::validate() const {
  const auto errs = violations();
  if (errs.empty()) return;
  std::string msg = "invalid network configuration:";
  for (const auto& e : errs) msg += "\n  " + e;
  throw ConfigError(msg);
}

std::string NetworkConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << to_string(variant) << ";T=" << timesteps << ";input=" << shape_string(input_shape)
     << ";tau=" << lif.tau << ";vth=" << lif.v_th << ";beta=" << lif.beta << ";detach=" << lif.detach_reset
     << ";agmm=" << (agmm_backward == AgmmBackward::exact ? "exact" : "approx") << "," << agmm_per_sample
     << ";clamp=" << clamp_latent << ";layers=";
  for (const auto& L : layers) {
    os << to_string(L.kind);
    if (L.kind == LayerKind::conv || L.kind == LayerKind::binary_conv)
      os << "(" << L.conv.in_channels << "," << L.conv.out_channels << "," << L.conv.kernel_h << ","
         << L.conv.kernel_w << "," << L.conv.stride << "," << L.conv.padding << ")";
    if (L.kind == LayerKind::avgpool) os << "(" << L.pool_kernel << ")";
    if (L.kind == LayerKind::linear) os << "(" << L.out_features << ")";
    if (L.kind == LayerKind::skip_add) os << "(" << L.skip_source << ")";
    os << "|";
  }
  return os.str();
}

std::uint64_t NetworkConfig::digest() const { return fnv1a(canonical()); }

NetworkConfig desk_network(const DeskOptions& o) {
  NetworkConfig c;
  c.variant = o.variant;
  c.input_shape = o.input_shape;
  c.timesteps = o.timesteps;
  c.seed = o.seed;
  if (o.input_shape.size() != 3) throw ConfigError("desk network input must be [C,H,W]");
  const std::size_t W = o.width;
  c.layers.push_back(LayerDesc::make_conv({o.input_shape[0], W, 3, 3, 1, 1}));
  c.layers.push_back(LayerDesc::make(LayerKind::batchnorm));
  c.layers.push_back(LayerDesc::make(LayerKind::lif));
  for (std::size_t b = 0; b < o.blocks; ++b) {
    const bool down = o.downsample && b == 0;
    const std::size_t block_input = c.layers.size() - 1;
    const ConvSpec spec{W, W, 3, 3, down ? std::size_t{2} : std::size_t{1}, 1};
    c.layers.push_back(o.variant == Variant::fp ? LayerDesc::make_conv(spec) : LayerDesc::make_binary_conv(spec));
    c.layers.push_back(LayerDesc::make(LayerKind::batchnorm));
    if (o.variant == Variant::binary_agmm) c.layers.push_back(LayerDesc::make(LayerKind::agmm));
    if (o.skip && !down) c.layers.push_back(LayerDesc::make_skip(block_input));
    c.layers.push_back(LayerDesc::make(LayerKind::lif));
  }
  c.layers.push_back(LayerDesc::make_pool(0));
  c.layers.push_back(LayerDesc::make_linear(o.classes));
  return c;
}

void NetworkTelemetry::clear() {
  weight_grads.clear();
  gates.clear();
  firing.clear();
}

// ---------------------------------------------------------------------------

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  std::vector<std::string> errs;
  shapes_ = infer_shapes(config_, errs);
  initialize();
}

std::size_t Network::classes() const { return config_.layers.back().out_features; }

void Network::initialize() {
  // Each weighted layer draws from its own stream keyed by its ordinal among
  // weighted layers, so variants that differ only in AGMM layers or binary
  // flags share identical initial weights.
  std::size_t ordinal = 0;
  auto he_normal = [&](const Shape& shape, std::size_t fan_in) {
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(ordinal++)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor t(shape);
    for (auto& v : t.data()) v = dist(rng);
    return t;
  };
  nodes_.clear();
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const auto& L = config_.layers[i];
    const Shape in = input_shape(i);
    switch (L.kind) {
      case LayerKind::conv: {
        const std::size_t fan_in = L.conv.in_channels * L.conv.kernel_h * L.conv.kernel_w;
        nodes_.emplace_back(ConvNode{he_normal(L.conv.weight_shape(), fan_in), {}});
        break;
      }
      case LayerKind::binary_conv: {
        const std::size_t fan_in = L.conv.in_channels * L.conv.kernel_h * L.conv.kernel_w;
        Tensor w = he_normal(L.conv.weight_shape(), fan_in);
        if (config_.clamp_latent) clamp_latent(w);
        nodes_.emplace_back(BinaryConvNode{BinaryConvLayer(L.conv, std::move(w)), {}});
        break;
      }
      case LayerKind::batchnorm:
        nodes_.emplace_back(BatchNormNode{BatchNormState(in[0]), {}});
        break;
      case LayerKind::lif:
        nodes_.emplace_back(LifNode{});
        break;
      case LayerKind::agmm: {
        AGMMState st(config_.timesteps, config_.agmm_alpha_init);
        st.per_sample = config_.agmm_per_sample;
        nodes_.emplace_back(AgmmNode{std::move(st)});
        break;
      }
      case LayerKind::avgpool:
        nodes_.emplace_back(PoolNode{});
        break;
      case LayerKind::linear: {
        const std::size_t fan_in = shape_volume(in);
        Tensor w = he_normal({L.out_features, fan_in}, fan_in);
        nodes_.emplace_back(LinearNode{std::move(w), Tensor({L.out_features}, 0.0), {}});
        break;
      }
      case LayerKind::skip_add:
        nodes_.emplace_back(SkipNode{});
        break;
    }
  }
  zero_grad();
}

Tensor Network::forward(const Tensor& input, bool training) {
  const std::size_t T = config_.timesteps;
  Shape expect = config_.input_shape;
  if (input.rank() != 4 || input.dim(0) % T != 0 || Shape(input.shape().begin() + 1, input.shape().end()) != expect)
    throw ShapeError("network input " + shape_string(input.shape()) + " is not [T*N," +
                     shape_string(expect).substr(1));
  batch_ = input.dim(0) / T;
  training_ = training;
  input_ = input;
  outputs_.assign(nodes_.size(), Tensor());
  const Tensor* x = &input_;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& L = config_.layers[i];
    Tensor y = std::visit(
        [&](auto& node) -> Tensor {
          using N = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<N, ConvNode>) {
            return conv2d_forward(*x, node.weights, L.conv, training ? &node.cache : nullptr);
          } else if constexpr (std::is_same_v<N, BinaryConvNode>) {
            return node.layer.forward(*x, training ? &node.cache : nullptr);
          } else if constexpr (std::is_same_v<N, BatchNormNode>) {
            node.state.mode = training ? BatchNormMode::training : BatchNormMode::inference;
            return batchnorm_forward(*x, node.state, training ? &node.cache : nullptr);
          } else if constexpr (std::is_same_v<N, LifNode>) {
            Tensor s = lif_forward(*x, T, config_.lif, &node.cache);
            if (collect_) {
              auto& f = telemetry_.firing[i];
              for (double v : s.data()) f.spikes += v;
              f.opportunities += static_cast<double>(s.size());
            }
            return s;
          } else if constexpr (std::is_same_v<N, AgmmNode>) {
            return agmm_forward(*x, node.state);
          } else if constexpr (std::is_same_v<N, PoolNode>) {
            return avgpool_forward(*x, L.pool_kernel);
          } else if constexpr (std::is_same_v<N, LinearNode>) {
            return linear_forward(*x, node.weights, &node.bias, training ? &node.cache : nullptr);
          } else {
            return add_forward(*x, outputs_[L.skip_source]);
          }
        },
        nodes_[i]);
    if (!y.all_finite())
      throw NumericError("non-finite values produced by layer " + std::to_string(i) + " (" + to_string(L.kind) + ")");
    outputs_[i] = std::move(y);
    x = &outputs_[i];
  }
  // Time-averaged readout of the final linear currents.
  const Tensor& currents = outputs_.back();
  const std::size_t K = currents.dim(1);
  Tensor logits({batch_, K});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < batch_; ++n)
      for (std::size_t k = 0; k < K; ++k) logits[n * K + k] += currents[(t * batch_ + n) * K + k];
  for (auto& v : logits.data()) v /= static_cast<double>(T);
  forward_done_ = true;
  return logits;
}

Tensor Network::conv_backward_tracked(std::size_t i, const Tensor& grad_out, const Tensor& input,
                                      const ConvSpec& spec, const Tensor& weights, Tensor& weight_grad,
                                      const std::vector<double>* gamma, const Tensor* latent) {
  // Per-timestep weight gradients so the statistics see each t separately.
  const std::size_t T = config_.timesteps;
  Tensor grad_in(input.shape());
  weight_grad = Tensor(weights.shape());
  for (std::size_t t = 0; t < T; ++t) {
    ConvCache c{slice_leading(input, t * batch_, batch_), true};
    auto g = conv2d_backward(slice_leading(grad_out, t * batch_, batch_), c, weights, spec);
    assign_leading(grad_in, g.input, t * batch_);
    Tensor wg = gamma ? ste_backward(g.weights, *latent, *gamma) : std::move(g.weights);
    if (collect_) telemetry_.weight_grads.collect(i, t, wg.data());
    for (std::size_t k = 0; k < wg.size(); ++k) weight_grad[k] += wg[k];
  }
  return grad_in;
}

void Network::backward(const Tensor& grad_logits) {
  if (!forward_done_ || !training_) throw StateError("backward requires a preceding training-mode forward pass");
  const std::size_t T = config_.timesteps;
  const std::size_t K = classes();
  if (grad_logits.shape() != Shape{batch_, K})
    throw ShapeError("grad_logits shape " + shape_string(grad_logits.shape()) + ", expected " +
                     shape_string({batch_, K}));
  const auto tracked = tracked_layers();
  auto is_tracked = [&](std::size_t i) { return std::find(tracked.begin(), tracked.end(), i) != tracked.end(); };

  std::vector<Tensor> grads(nodes_.size());
  {
    Tensor g({T * batch_, K});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t n = 0; n < batch_; ++n)
        for (std::size_t k = 0; k < K; ++k) g[(t * batch_ + n) * K + k] = grad_logits[n * K + k] / static_cast<double>(T);
    grads.back() = std::move(g);
  }
  auto accumulate = [&](std::size_t j, const Tensor& g) {
    if (grads[j].empty()) {
      grads[j] = g;
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) grads[j][k] += g[k];
    }
  };
  auto add_into = [](Tensor& param, const Tensor& g) {
    auto pg = param.grad();
    for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
  };

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (grads[i].empty()) grads[i] = Tensor(outputs_[i].shape());
    const Tensor& gout = grads[i];
    const Tensor& in = input_of(i);
    const auto& L = config_.layers[i];
    Tensor gin = std::visit(
        [&](auto& node) -> Tensor {
          using N = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<N, ConvNode>) {
            if (is_tracked(i)) {
              Tensor wg;
              Tensor gi = conv_backward_tracked(i, gout, in, L.conv, node.weights, wg, nullptr, nullptr);
              add_into(node.weights, wg);
              return gi;
            }
            auto g = conv2d_backward(gout, node.cache, node.weights, L.conv);
            add_into(node.weights, g.weights);
            return std::move(g.input);
          } else if constexpr (std::is_same_v<N, BinaryConvNode>) {
            Tensor wg;
            Tensor gi = conv_backward_tracked(i, gout, in, L.conv, materialize(node.layer.binarized()), wg,
                                              &node.layer.binarized().gamma, &node.layer.latent());
            add_into(node.layer.latent(), wg);
            return gi;
          } else if constexpr (std::is_same_v<N, BatchNormNode>) {
            auto g = batchnorm_backward(gout, node.cache, node.state);
            add_into(node.state.scale, g.scale);
            add_into(node.state.shift, g.shift);
            return std::move(g.input);
          } else if constexpr (std::is_same_v<N, LifNode>) {
            return lif_backward(gout, node.cache, config_.lif);
          } else if constexpr (std::is_same_v<N, AgmmNode>) {
            auto g = agmm_backward(gout, node.state, config_.agmm_backward);
            if (collect_) {
              auto& tel = telemetry_.gates[i];
              tel.before.resize(T);
              tel.after.resize(T);
              tel.value.resize(T);
              const std::size_t per_t = gout.size() / T;
              for (std::size_t t = 0; t < T; ++t) {
                tel.before[t].push(std::span<const double>(gout.data().data() + t * per_t, per_t));
                tel.after[t].push(std::span<const double>(g.input.data().data() + t * per_t, per_t));
              }
              for (std::size_t k = 0; k < node.state.gate_count(); ++k)
                tel.value[node.state.timestep_of_gate(k)].push(node.state.gate[k]);
            }
            auto pg = node.state.alpha.grad();
            for (std::size_t t = 0; t < T; ++t) pg[t] += g.alpha[t];
            return std::move(g.input);
          } else if constexpr (std::is_same_v<N, PoolNode>) {
            return avgpool_backward(gout, in.shape(), L.pool_kernel);
          } else if constexpr (std::is_same_v<N, LinearNode>) {
            auto g = linear_backward(gout, node.cache, node.weights, true);
            add_into(node.weights, g.weights);
            add_into(node.bias, g.bias);
            return std::move(g.input);
          } else {
            accumulate(L.skip_source, gout);
            return gout;
          }
        },
        nodes_[i]);
    if (i > 0) accumulate(i - 1, gin);
  }
  forward_done_ = false;
}

void Network::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> ps;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const std::string base = "layer" + std::to_string(i) + "." + to_string(config_.layers[i].kind);
    std::visit(
        [&](auto& node) {
          using N = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<N, ConvNode>) {
            ps.push_back({base + ".weight", &node.weights, i, false});
          } else if constexpr (std::is_same_v<N, BinaryConvNode>) {
            ps.push_back({base + ".latent", &node.layer.latent(), i, true});
          } else if constexpr (std::is_same_v<N, BatchNormNode>) {
            ps.push_back({base + ".scale", &node.state.scale, i, false});
            ps.push_back({base + ".shift", &node.state.shift, i, false});
          } else if constexpr (std::is_same_v<N, AgmmNode>) {
            ps.push_back({base + ".alpha", &node.state.alpha, i, false});
          } else if constexpr (std::is_same_v<N, LinearNode>) {
            ps.push_back({base + ".weight", &node.weights, i, false});
            ps.push_back({base + ".bias", &node.bias, i, false});
          }
        },
        nodes_[i]);
  }
  return ps;
}

std::vector<std::vector<double>*> Network::state_buffers() {
  std::vector<std::vector<double>*> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    std::visit(
        [&](auto& node) {
          using N = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<N, ConvNode>) {
            out.push_back(&node.weights.values());
          } else if constexpr (std::is_same_v<N, BinaryConvNode>) {
            out.push_back(&node.layer.latent().values());
          } else if constexpr (std::is_same_v<N, BatchNormNode>) {
            out.push_back(&node.state.scale.values());
            out.push_back(&node.state.shift.values());
            out.push_back(&node.state.running_mean);
            out.push_back(&node.state.running_var);
          } else if constexpr (std::is_same_v<N, AgmmNode>) {
            out.push_back(&node.state.alpha.values());
          } else if constexpr (std::is_same_v<N, LinearNode>) {
            out.push_back(&node.weights.values());
            out.push_back(&node.bias.values());
          }
        },
        nodes_[i]);
  }
  return out;
}

std::vector<std::size_t> Network::tracked_layers() const {
  std::vector<std::size_t> out;
  bool seen_first = false;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const auto k = config_.layers[i].kind;
    if (k != LayerKind::conv && k != LayerKind::binary_conv) continue;
    if (!seen_first) {
      seen_first = true;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

SignSnapshot Network::snapshot(std::size_t epoch) const {
  SignSnapshot s;
  s.epoch = epoch;
  for (std::size_t i : tracked_layers())
    s.layers.push_back(LayerSigns::capture("layer" + std::to_string(i), weights(i)->data()));
  return s;
}

SignSnapshot Network::fp_snapshot(std::size_t epoch) const {
  SignSnapshot s;
  s.epoch = epoch;
  const auto tracked = tracked_layers();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto k = config_.layers[i].kind;
    if ((k == LayerKind::conv || k == LayerKind::linear) &&
        std::find(tracked.begin(), tracked.end(), i) == tracked.end())
      s.layers.push_back(LayerSigns::capture("layer" + std::to_string(i), weights(i)->data()));
  }
  return s;
}

const Tensor& Network::output(std::size_t i) const {
  if (i >= outputs_.size() || outputs_[i].empty()) throw StateError("no cached output for layer " + std::to_string(i));
  return outputs_[i];
}

const Tensor& Network::input_of(std::size_t i) const { return i == 0 ? input_ : output(i - 1); }

const AGMMState* Network::agmm_state(std::size_t i) const {
  if (auto* n = std::get_if<AgmmNode>(&nodes_.at(i))) return &n->state;
  return nullptr;
}

const BinaryConvLayer* Network::binary_conv(std::size_t i) const {
  if (auto* n = std::get_if<BinaryConvNode>(&nodes_.at(i))) return &n->layer;
  return nullptr;
}

const Tensor* Network::weights(std::size_t i) const {
  const auto& node = nodes_.at(i);
  if (auto* n = std::get_if<ConvNode>(&node)) return &n->weights;
  if (auto* n = std::get_if<BinaryConvNode>(&node)) return &n->layer.latent();
  if (auto* n = std::get_if<LinearNode>(&node)) return &n->weights;
  return nullptr;
}

}  // namespace bsnn
