#include "bsnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsnn/error.hpp"

namespace bsnn {

namespace {

// Range of output positions o with 0 <= o*stride - pad + k < in.
struct ValidRange {
  std::size_t begin;
  std::size_t end;
};

ValidRange valid_outputs(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                         std::size_t pad) {
  // o*stride + k >= pad  and  o*stride + k < in + pad
  std::size_t begin = 0;
  if (k < pad) begin = (pad - k + stride - 1) / stride;
  std::size_t end = 0;
  if (in + pad > k) end = std::min(out, (in + pad - k - 1) / stride + 1);
  if (end < begin) end = begin;
  return {begin, end};
}

void check_conv_input(const Tensor& input, const Tensor& weights, const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 4) throw ShapeError("conv2d input must be rank 4, got " + shape_string(input.shape()));
  if (input.dim(1) != spec.in_channels)
    throw ShapeError("conv2d input channel dimension (axis 1) is " + std::to_string(input.dim(1)) +
                     ", expected " + std::to_string(spec.in_channels));
  if (weights.shape() != spec.weight_shape())
    throw ShapeError("conv2d weight shape " + shape_string(weights.shape()) + ", expected " +
                     shape_string(spec.weight_shape()));
}

}  // namespace

std::size_t ConvSpec::out_extent(std::size_t in, std::size_t kernel) const {
  if (stride == 0) throw ShapeError("conv stride must be positive");
  if (in + 2 * padding < kernel)
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in + 2 * padding));
  return (in + 2 * padding - kernel) / stride + 1;
}

Shape ConvSpec::output_shape(const Shape& input) const {
  if (input.size() != 4) throw ShapeError("conv2d input must be rank 4, got " + shape_string(input));
  return {input[0], out_channels, out_extent(input[2], kernel_h), out_extent(input[3], kernel_w)};
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0)
    throw ShapeError("conv spec requires positive channels, kernel and stride");
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const ConvSpec& spec, ConvCache* cache) {
  check_conv_input(input, weights, spec);
  const Shape oshape = spec.output_shape(input.shape());
  const std::size_t N = input.dim(0), Cin = spec.in_channels, H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = spec.out_channels, OH = oshape[2], OW = oshape[3];
  const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, S = spec.stride, P = spec.padding;
  Tensor out(oshape);
  const double* x = input.data().data();
  const double* w = weights.data().data();
  double* y = out.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Cout; ++co) {
      double* yp = y + (n * Cout + co) * OH * OW;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xp = x + (n * Cin + ci) * H * W;
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const auto rh = valid_outputs(H, OH, kh, S, P);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const double wv = w[((co * Cin + ci) * KH + kh) * KW + kw];
            if (wv == 0.0) continue;
            const auto rw = valid_outputs(W, OW, kw, S, P);
            for (std::size_t oh = rh.begin; oh < rh.end; ++oh) {
              const double* row = xp + (oh * S + kh - P) * W;
              double* yrow = yp + oh * OW;
              for (std::size_t ow = rw.begin; ow < rw.end; ++ow) yrow[ow] += wv * row[ow * S + kw - P];
            }
          }
        }
      }
    }
  }
  if (cache) {
    cache->input = input;
    cache->valid = true;
  }
  return out;
}

namespace {

void conv_adjoint(const Tensor& grad_out, const Tensor& input, const Tensor& weights, const ConvSpec& spec,
                  Tensor* grad_in, Tensor& grad_w) {
  const std::size_t N = input.dim(0), Cin = spec.in_channels, H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = spec.out_channels, OH = grad_out.dim(2), OW = grad_out.dim(3);
  const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, S = spec.stride, P = spec.padding;
  const double* x = input.data().data();
  const double* w = weights.data().data();
  const double* g = grad_out.data().data();
  double* gx = grad_in ? grad_in->data().data() : nullptr;
  double* gw = grad_w.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Cout; ++co) {
      const double* gp = g + (n * Cout + co) * OH * OW;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xp = x + (n * Cin + ci) * H * W;
        double* gxp = gx ? gx + (n * Cin + ci) * H * W : nullptr;
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const auto rh = valid_outputs(H, OH, kh, S, P);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const std::size_t widx = ((co * Cin + ci) * KH + kh) * KW + kw;
            const double wv = w[widx];
            const auto rw = valid_outputs(W, OW, kw, S, P);
            double acc = 0.0;
            for (std::size_t oh = rh.begin; oh < rh.end; ++oh) {
              const std::size_t ih = oh * S + kh - P;
              const double* grow = gp + oh * OW;
              const double* xrow = xp + ih * W;
              for (std::size_t ow = rw.begin; ow < rw.end; ++ow) acc += grow[ow] * xrow[ow * S + kw - P];
              if (gxp) {
                double* gxrow = gxp + ih * W;
                for (std::size_t ow = rw.begin; ow < rw.end; ++ow) gxrow[ow * S + kw - P] += wv * grow[ow];
              }
            }
            gw[widx] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

ConvGrads conv2d_backward(const Tensor& grad_out, const ConvCache& cache, const Tensor& weights,
                          const ConvSpec& spec) {
  if (!cache.valid) throw StateError("conv2d_backward called without a forward cache");
  check_conv_input(cache.input, weights, spec);
  const Shape oshape = spec.output_shape(cache.input.shape());
  if (grad_out.shape() != oshape)
    throw ShapeError("conv2d grad_out shape " + shape_string(grad_out.shape()) + ", expected " +
                     shape_string(oshape));
  ConvGrads g{Tensor(cache.input.shape()), Tensor(weights.shape())};
  conv_adjoint(grad_out, cache.input, weights, spec, &g.input, g.weights);
  return g;
}

Tensor conv2d_weight_grad(const Tensor& grad_out, const Tensor& input, const ConvSpec& spec) {
  Tensor dummy(spec.weight_shape());
  check_conv_input(input, dummy, spec);
  if (grad_out.shape() != spec.output_shape(input.shape()))
    throw ShapeError("conv2d grad_out shape " + shape_string(grad_out.shape()) + " does not match forward output");
  Tensor gw(spec.weight_shape());
  conv_adjoint(grad_out, input, dummy, spec, nullptr, gw);
  return gw;
}

// ---------------------------------------------------------------------------
// Batch normalization

BatchNormState::BatchNormState(std::size_t channels)
    : scale({channels}, 1.0), shift({channels}, 0.0), running_mean(channels, 0.0), running_var(channels, 1.0) {}

void BatchNormState::validate() const {
  if (!(epsilon > 0.0)) throw DomainError("batchnorm epsilon must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) throw DomainError("batchnorm momentum must lie in (0,1)");
  for (double v : running_var)
    if (v < 0.0) throw DomainError("batchnorm running variance must be non-negative");
}

namespace {

struct ChannelLayout {
  std::size_t outer;  // N
  std::size_t channels;
  std::size_t inner;  // product of trailing extents
};

ChannelLayout channel_layout(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("batchnorm input needs a channel axis, got " + shape_string(t.shape()));
  std::size_t inner = 1;
  for (std::size_t a = 2; a < t.rank(); ++a) inner *= t.dim(a);
  return {t.dim(0), t.dim(1), inner};
}

}  // namespace

Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, BatchNormCache* cache) {
  state.validate();
  if (input.empty()) throw ShapeError("batchnorm on a zero-size batch");
  const auto L = channel_layout(input);
  if (L.channels != state.channels())
    throw ShapeError("batchnorm channel dimension (axis 1) is " + std::to_string(L.channels) + ", state has " +
                     std::to_string(state.channels()));
  Tensor out(input.shape());
  const double* x = input.data().data();
  double* y = out.data().data();
  const std::size_t count = L.outer * L.inner;

  if (state.mode == BatchNormMode::inference) {
    for (std::size_t c = 0; c < L.channels; ++c) {
      const double inv = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
      const double a = state.scale[c] * inv;
      const double b = state.shift[c] - state.running_mean[c] * a;
      for (std::size_t n = 0; n < L.outer; ++n) {
        const std::size_t base = (n * L.channels + c) * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) y[base + i] = a * x[base + i] + b;
      }
    }
    if (cache) cache->valid = false;
    return out;
  }

  if (count < 2) throw ShapeError("batchnorm training needs at least two values per channel");
  Tensor xhat(input.shape());
  std::vector<double> inv_std(L.channels);
  for (std::size_t c = 0; c < L.channels; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < L.outer; ++n) {
      const std::size_t base = (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) sum += x[base + i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < L.outer; ++n) {
      const std::size_t base = (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const double d = x[base + i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const double inv = 1.0 / std::sqrt(var + state.epsilon);
    inv_std[c] = inv;
    for (std::size_t n = 0; n < L.outer; ++n) {
      const std::size_t base = (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const double h = (x[base + i] - mean) * inv;
        xhat[base + i] = h;
        y[base + i] = state.scale[c] * h + state.shift[c];
      }
    }
    const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
    state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
    state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->valid = true;
  }
  return out;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                  const BatchNormState& state) {
  if (state.mode != BatchNormMode::training)
    throw StateError("batchnorm backward is only defined in training mode");
  if (!cache.valid) throw StateError("batchnorm_backward called without a training-mode forward cache");
  require_same_shape(grad_out, cache.normalized, "batchnorm_backward grad_out");
  const auto L = channel_layout(grad_out);
  const std::size_t count = L.outer * L.inner;
  BatchNormGrads g{Tensor(grad_out.shape()), Tensor({L.channels}), Tensor({L.channels})};
  const double* dy = grad_out.data().data();
  const double* xh = cache.normalized.data().data();
  double* dx = g.input.data().data();
  for (std::size_t c = 0; c < L.channels; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < L.outer; ++n) {
      const std::size_t base = (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xh += dy[base + i] * xh[base + i];
      }
    }
    g.shift[c] = sum_dy;
    g.scale[c] = sum_dy_xh;
    const double k = state.scale[c] * cache.inv_std[c] / static_cast<double>(count);
    const double m = static_cast<double>(count);
    for (std::size_t n = 0; n < L.outer; ++n) {
      const std::size_t base = (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i)
        dx[base + i] = k * (m * dy[base + i] - sum_dy - xh[base + i] * sum_dy_xh);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Linear

Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor* bias, LinearCache* cache) {
  if (input.rank() < 1 || weights.rank() != 2)
    throw ShapeError("linear expects input [N,...] and weights [out,in]");
  const std::size_t N = input.dim(0);
  const std::size_t in = input.size() / N;
  const std::size_t out = weights.dim(0);
  if (weights.dim(1) != in)
    throw ShapeError("linear input features " + std::to_string(in) + " do not match weight axis 1 (" +
                     std::to_string(weights.dim(1)) + ")");
  if (bias && bias->size() != out)
    throw ShapeError("linear bias length " + std::to_string(bias->size()) + ", expected " + std::to_string(out));
  Tensor y({N, out});
  const double* x = input.data().data();
  const double* w = weights.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias ? (*bias)[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[n * in + i];
      y[n * out + o] = acc;
    }
  if (cache) {
    cache->input = input.reshaped({N, in});
    cache->input_shape = input.shape();
    cache->valid = true;
  }
  return y;
}

LinearGrads linear_backward(const Tensor& grad_out, const LinearCache& cache, const Tensor& weights,
                            bool has_bias) {
  if (!cache.valid) throw StateError("linear_backward called without a forward cache");
  const std::size_t N = cache.input.dim(0), in = cache.input.dim(1), out = weights.dim(0);
  if (grad_out.shape() != Shape{N, out})
    throw ShapeError("linear grad_out shape " + shape_string(grad_out.shape()) + ", expected " +
                     shape_string({N, out}));
  LinearGrads g{Tensor(cache.input_shape), Tensor(weights.shape()), has_bias ? Tensor({out}) : Tensor()};
  const double* x = cache.input.data().data();
  const double* w = weights.data().data();
  const double* dy = grad_out.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      const double d = dy[n * out + o];
      if (has_bias) g.bias[o] += d;
      for (std::size_t i = 0; i < in; ++i) {
        g.weights[o * in + i] += d * x[n * in + i];
        g.input[n * in + i] += d * w[o * in + i];
      }
    }
  return g;
}

// ---------------------------------------------------------------------------
// Pooling and skip addition

namespace {

std::size_t pool_window(const Shape& s, std::size_t kernel) {
  if (s.size() != 4) throw ShapeError("avgpool input must be rank 4, got " + shape_string(s));
  if (kernel == 0) {
    if (s[2] != s[3]) throw ShapeError("global avgpool expects square maps, got " + shape_string(s));
    return s[2];
  }
  if (s[2] % kernel != 0 || s[3] % kernel != 0)
    throw ShapeError("avgpool kernel " + std::to_string(kernel) + " does not divide spatial extent of " +
                     shape_string(s));
  return kernel;
}

}  // namespace

Tensor avgpool_forward(const Tensor& input, std::size_t kernel) {
  const std::size_t k = pool_window(input.shape(), kernel);
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t OH = H / k, OW = W / k;
  Tensor out({N, C, OH, OW});
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) acc += input.at(n, c, oh * k + i, ow * k + j);
          out.at(n, c, oh, ow) = acc * inv;
        }
  return out;
}

Tensor avgpool_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t kernel) {
  const std::size_t k = pool_window(input_shape, kernel);
  const Shape expect{input_shape[0], input_shape[1], input_shape[2] / k, input_shape[3] / k};
  if (grad_out.shape() != expect)
    throw ShapeError("avgpool grad_out shape " + shape_string(grad_out.shape()) + ", expected " +
                     shape_string(expect));
  Tensor g(input_shape);
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t n = 0; n < expect[0]; ++n)
    for (std::size_t c = 0; c < expect[1]; ++c)
      for (std::size_t oh = 0; oh < expect[2]; ++oh)
        for (std::size_t ow = 0; ow < expect[3]; ++ow) {
          const double v = grad_out.at(n, c, oh, ow) * inv;
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) g.at(n, c, oh * k + i, ow * k + j) = v;
        }
  return g;
}

Tensor add_forward(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

std::pair<Tensor, Tensor> add_backward(const Tensor& grad_out) { return {grad_out, grad_out}; }

}  // namespace bsnn
