#pragma once

#include <vector>

#include "bsnn/ops.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn {

struct Binarized {
  Tensor signs;               // +-1, same shape as the latent weights
  std::vector<double> gamma;  // one scaling factor per output channel
};

/// sign(w) = -1 for w < 0, +1 otherwise; gamma[c] = mean |w| over channel c
/// (axis 0).
Binarized binarize(const Tensor& latent);

/// gamma[c] * sign(w), the weights the convolution actually uses.
Tensor materialize(const Binarized& b);

/// Convolution whose weights are re-binarized from latent reals on every
/// forward pass.
class BinaryConvLayer {
 public:
  BinaryConvLayer() = default;
  BinaryConvLayer(ConvSpec spec, Tensor latent);

  const ConvSpec& spec() const { return spec_; }
  Tensor& latent() { return latent_; }
  const Tensor& latent() const { return latent_; }
  const Binarized& binarized() const { return bin_; }

  /// Refreshes gamma and signs, then convolves with gamma*sign.
  Tensor forward(const Tensor& input, ConvCache* cache = nullptr);

  /// Returns the input gradient; the latent-weight gradient (after STE) is
  /// written to `grad_latent`.
  Tensor backward(const Tensor& grad_out, const ConvCache& cache, Tensor& grad_latent) const;

 private:
  ConvSpec spec_;
  Tensor latent_;
  Binarized bin_;
  Tensor effective_;
};

Tensor binary_conv_forward(const Tensor& input, BinaryConvLayer& layer, ConvCache* cache = nullptr);

/// Straight-through estimator: grad_latent = gamma[c] * grad_wb where
/// |latent| <= 1, zero elsewhere. gamma receives no gradient.
Tensor ste_backward(const Tensor& grad_wb, const Tensor& latent, const std::vector<double>& gamma);

/// Clamps every latent weight into [-1, 1].
void clamp_latent(Tensor& latent);

}  // namespace bsnn
