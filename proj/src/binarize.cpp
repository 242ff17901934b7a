#include "bsnn/binarize.hpp"

#include <algorithm>
#include <cmath>

#include "bsnn/error.hpp"

namespace bsnn {

Binarized binarize(const Tensor& latent) {
  if (latent.rank() == 0 || latent.empty()) throw ShapeError("binarize needs a non-empty weight tensor");
  const std::size_t channels = latent.dim(0);
  const std::size_t per = latent.size() / channels;
  Binarized b{Tensor(latent.shape()), std::vector<double>(channels, 0.0)};
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double w = latent[c * per + i];
      b.signs[c * per + i] = w < 0.0 ? -1.0 : 1.0;
      sum += std::abs(w);
    }
    b.gamma[c] = sum / static_cast<double>(per);
  }
  return b;
}

Tensor materialize(const Binarized& b) {
  Tensor w = b.signs;
  const std::size_t per = w.size() / b.gamma.size();
  for (std::size_t c = 0; c < b.gamma.size(); ++c)
    for (std::size_t i = 0; i < per; ++i) w[c * per + i] *= b.gamma[c];
  return w;
}

BinaryConvLayer::BinaryConvLayer(ConvSpec spec, Tensor latent) : spec_(spec), latent_(std::move(latent)) {
  spec_.validate();
  if (latent_.shape() != spec_.weight_shape())
    throw ShapeError("binary conv latent shape " + shape_string(latent_.shape()) + ", expected " +
                     shape_string(spec_.weight_shape()));
}

Tensor BinaryConvLayer::forward(const Tensor& input, ConvCache* cache) {
  bin_ = binarize(latent_);
  effective_ = materialize(bin_);
  return conv2d_forward(input, effective_, spec_, cache);
}

Tensor BinaryConvLayer::backward(const Tensor& grad_out, const ConvCache& cache, Tensor& grad_latent) const {
  if (effective_.empty()) throw StateError("binary conv backward before any forward pass");
  auto g = conv2d_backward(grad_out, cache, effective_, spec_);
  grad_latent = ste_backward(g.weights, latent_, bin_.gamma);
  return std::move(g.input);
}

Tensor binary_conv_forward(const Tensor& input, BinaryConvLayer& layer, ConvCache* cache) {
  return layer.forward(input, cache);
}

Tensor ste_backward(const Tensor& grad_wb, const Tensor& latent, const std::vector<double>& gamma) {
  require_same_shape(grad_wb, latent, "ste_backward");
  if (gamma.empty() || latent.size() % gamma.size() != 0)
    throw ShapeError("ste_backward: gamma length does not divide the weight count");
  const std::size_t per = latent.size() / gamma.size();
  Tensor out(latent.shape());
  for (std::size_t i = 0; i < latent.size(); ++i)
    out[i] = std::abs(latent[i]) <= 1.0 ? grad_wb[i] * gamma[i / per] : 0.0;
  return out;
}

void clamp_latent(Tensor& latent) {
  for (auto& w : latent.data()) w = std::clamp(w, -1.0, 1.0);
}

}  // namespace bsnn
