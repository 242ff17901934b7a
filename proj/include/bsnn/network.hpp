#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "bsnn/agmm.hpp"
#include "bsnn/binarize.hpp"
#include "bsnn/flip.hpp"
#include "bsnn/neuron.hpp"
#include "bsnn/ops.hpp"
#include "bsnn/stats.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn {

enum class Variant { fp, binary, binary_agmm };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

enum class LayerKind { conv, binary_conv, batchnorm, lif, agmm, avgpool, linear, skip_add };

std::string to_string(LayerKind k);

struct LayerDesc {
  LayerKind kind = LayerKind::conv;
  ConvSpec conv;                // conv, binary_conv
  std::size_t pool_kernel = 0;  // avgpool; 0 pools the whole map
  std::size_t out_features = 0; // linear
  std::size_t skip_source = 0;  // skip_add: adds the output of this earlier layer

  static LayerDesc make_conv(ConvSpec s) { return {LayerKind::conv, s, 0, 0, 0}; }
  static LayerDesc make_binary_conv(ConvSpec s) { return {LayerKind::binary_conv, s, 0, 0, 0}; }
  static LayerDesc make(LayerKind k) { return {k, {}, 0, 0, 0}; }
  static LayerDesc make_pool(std::size_t kernel) { return {LayerKind::avgpool, {}, kernel, 0, 0}; }
  static LayerDesc make_linear(std::size_t out) { return {LayerKind::linear, {}, 0, out, 0}; }
  static LayerDesc make_skip(std::size_t source) { return {LayerKind::skip_add, {}, 0, 0, source}; }
};

enum class InputEncoding { constant, bernoulli };

struct NetworkConfig {
  std::vector<LayerDesc> layers;
  Shape input_shape{1, 12, 12};  // C, H, W of one sample
  std::size_t timesteps = 2;
  Variant variant = Variant::binary_agmm;
  LIFConfig lif;
  AgmmBackward agmm_backward = AgmmBackward::exact;
  bool agmm_per_sample = true;
  double agmm_alpha_init = 1.0;
  bool clamp_latent = true;
  std::uint64_t seed = 1;

  /// Every violated rule, each naming the offending layer index. Empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;
  /// Canonical text form of everything that determines parameter layout and
  /// forward semantics (seed excluded).
  std::string canonical() const;
  std::uint64_t digest() const;
};

/// The desk-scale architecture: FP conv -> BN -> LIF, then `blocks` units of
/// [conv -> BN -> (AGMM) -> (+skip) -> LIF], global avgpool, FP linear. Units
/// are binary in the binary variants; the first unit downsamples by 2 when
/// `downsample` is set and carries no skip.
struct DeskOptions {
  Variant variant = Variant::binary_agmm;
  Shape input_shape{1, 12, 12};
  std::size_t classes = 10;
  std::size_t width = 16;
  std::size_t blocks = 3;
  bool skip = true;
  bool downsample = true;
  std::size_t timesteps = 2;
  std::uint64_t seed = 1;
};

NetworkConfig desk_network(const DeskOptions& opts);

struct ParamRef {
  std::string name;
  Tensor* tensor = nullptr;
  std::size_t layer = 0;
  bool binary_latent = false;
};

/// Accumulated instrumentation, reset by the caller.
struct NetworkTelemetry {
  GradientStats weight_grads;  // keyed by (layer index, timestep)
  struct Gate {
    std::vector<RunningStats> before;  // dL/dX' per timestep
    std::vector<RunningStats> after;   // dL/dX per timestep
    std::vector<RunningStats> value;   // gate values per timestep
  };
  std::map<std::size_t, Gate> gates;
  struct Spikes {
    double spikes = 0.0;
    double opportunities = 0.0;
  };
  std::map<std::size_t, Spikes> firing;
  void clear();
};

class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t classes() const;

  /// `input` is folded [T*N, C, H, W]. Returns time-averaged logits [N, K].
  Tensor forward(const Tensor& input, bool training);

  /// Accumulates parameter gradients into each parameter's grad buffer.
  void backward(const Tensor& grad_logits);

  void zero_grad();
  std::vector<ParamRef> parameters();

  /// Parameters plus batch-norm running statistics, in declaration order.
  std::vector<std::vector<double>*> state_buffers();

  /// Conv layers whose weight signs are tracked: every conv except the first
  /// weighted layer (binary convs in the binary variants).
  std::vector<std::size_t> tracked_layers() const;
  SignSnapshot snapshot(std::size_t epoch) const;
  /// Signs of the full-precision layers (first conv, final linear), reported
  /// separately from the tracked set.
  SignSnapshot fp_snapshot(std::size_t epoch) const;

  /// Output of layer i from the last forward pass ([T*N, ...]).
  const Tensor& output(std::size_t i) const;
  /// Input of layer i from the last forward pass.
  const Tensor& input_of(std::size_t i) const;
  LayerKind kind(std::size_t i) const { return config_.layers[i].kind; }
  const AGMMState* agmm_state(std::size_t i) const;
  const BinaryConvLayer* binary_conv(std::size_t i) const;
  const Tensor* weights(std::size_t i) const;
  Shape output_shape(std::size_t i) const { return shapes_[i]; }
  Shape input_shape(std::size_t i) const { return i == 0 ? config_.input_shape : shapes_[i - 1]; }

  void set_telemetry(bool on) { collect_ = on; }
  NetworkTelemetry& telemetry() { return telemetry_; }
  const NetworkTelemetry& telemetry() const { return telemetry_; }

  /// Test hook: overrides the LIF threshold of every spiking layer.
  void set_threshold(double v_th) { config_.lif.v_th = v_th; }

 private:
  struct ConvNode {
    Tensor weights;
    ConvCache cache;
  };
  struct BinaryConvNode {
    BinaryConvLayer layer;
    ConvCache cache;
  };
  struct BatchNormNode {
    BatchNormState state;
    BatchNormCache cache;
  };
  struct LifNode {
    LIFCache cache;
  };
  struct AgmmNode {
    AGMMState state;
  };
  struct PoolNode {};
  struct LinearNode {
    Tensor weights;
    Tensor bias;
    LinearCache cache;
  };
  struct SkipNode {};
  using Node = std::variant<ConvNode, BinaryConvNode, BatchNormNode, LifNode, AgmmNode, PoolNode, LinearNode, SkipNode>;

  void initialize();
  Tensor conv_backward_tracked(std::size_t i, const Tensor& grad_out, const Tensor& input, const ConvSpec& spec,
                               const Tensor& weights, Tensor& weight_grad, const std::vector<double>* gamma,
                               const Tensor* latent);

  NetworkConfig config_;
  std::vector<Node> nodes_;
  std::vector<Shape> shapes_;  // per-sample output shape of each layer
  std::vector<Tensor> outputs_;
  Tensor input_;
  std::size_t batch_ = 0;
  bool training_ = false;
  bool forward_done_ = false;
  bool collect_ = false;
  NetworkTelemetry telemetry_;
};

}  // namespace bsnn
