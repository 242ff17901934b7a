#pragma once

// Layer primitives with hand-written backward passes. Each forward optionally
// fills a cache struct; each backward requires a valid cache and is the exact
// adjoint of its forward.

#include <cstddef>
#include <vector>

#include "bsnn/tensor.hpp"

namespace bsnn {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// floor((in + 2*padding - kernel)/stride) + 1; throws ShapeError when < 1.
  std::size_t out_extent(std::size_t in, std::size_t kernel) const;
  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
  Shape output_shape(const Shape& input) const;
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct ConvCache {
  Tensor input;
  bool valid = false;
};

struct ConvGrads {
  Tensor input;
  Tensor weights;
};

/// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,kh,kw]; no bias.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                      ConvCache* cache = nullptr);
ConvGrads conv2d_backward(const Tensor& grad_out, const ConvCache& cache, const Tensor& weights,
                          const ConvSpec& spec);
/// Weight gradient only, skipping the input adjoint.
Tensor conv2d_weight_grad(const Tensor& grad_out, const Tensor& input, const ConvSpec& spec);

enum class BatchNormMode { training, inference };

struct BatchNormState {
  Tensor scale;  // [C]
  Tensor shift;  // [C]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;
  BatchNormMode mode = BatchNormMode::training;

  explicit BatchNormState(std::size_t channels = 1);
  std::size_t channels() const { return running_mean.size(); }
  void validate() const;
};

struct BatchNormCache {
  Tensor normalized;  // x_hat
  std::vector<double> inv_std;
  bool valid = false;
};

struct BatchNormGrads {
  Tensor input;
  Tensor scale;
  Tensor shift;
};

/// Normalizes over every axis except axis 1 (channels). Training mode uses the
/// batch statistics and updates the running estimates.
Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, BatchNormCache* cache = nullptr);
BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                  const BatchNormState& state);

struct LinearCache {
  Tensor input;  // flattened [N, in]
  Shape input_shape;
  bool valid = false;
};

struct LinearGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;  // empty when the layer has no bias
};

/// y = x W^T + b with x flattened to [N, in]. `bias` may be null.
Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor* bias,
                      LinearCache* cache = nullptr);
LinearGrads linear_backward(const Tensor& grad_out, const LinearCache& cache, const Tensor& weights,
                            bool has_bias);

/// Non-overlapping mean pooling with square window `kernel`; kernel 0 pools the
/// full spatial extent.
Tensor avgpool_forward(const Tensor& input, std::size_t kernel);
Tensor avgpool_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t kernel);

Tensor add_forward(const Tensor& a, const Tensor& b);
/// Routes grad_out unchanged to both addends.
std::pair<Tensor, Tensor> add_backward(const Tensor& grad_out);

}  // namespace bsnn
