#include "bsnn/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "bsnn/agmm.hpp"
#include "bsnn/binarize.hpp"
#include "bsnn/error.hpp"
#include "bsnn/neuron.hpp"
#include "bsnn/ops.hpp"
#include "bsnn/verify/tape.hpp"

namespace bsnn::verify {

using tape::Var;

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::fabs(a[i] - b[i]));
    scale = std::max({scale, std::fabs(a[i]), std::fabs(b[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                                     double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

namespace {

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> d(mean, sd);
  Tensor t(s);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor with_values(const Shape& s, std::span<const double> v) { return Tensor(s, std::vector<double>(v.begin(), v.end())); }

CheckResult compare(std::string name, std::span<const double> analytic, std::span<const double> reference,
                    double tol) {
  CheckResult r;
  r.name = std::move(name);
  r.error = relative_error(analytic, reference);
  r.tolerance = tol;
  r.pass = r.error <= tol && std::isfinite(r.error);
  std::ostringstream os;
  os << analytic.size() << " entries";
  r.detail = os.str();
  return r;
}

// FD check of d/dx sum(R * F(x)) against an analytic gradient.
CheckResult fd_check(const std::string& name, const Tensor& x, const Tensor& analytic,
                     const std::function<Tensor(const Tensor&)>& F, const Tensor& R, const SuiteOptions& o) {
  auto f = [&](std::span<const double> v) { return dot(F(with_values(x.shape(), v)), R); };
  const auto num = numeric_gradient(f, x.values(), o.fd_step);
  return compare(name, analytic.data(), num, o.fd_tolerance);
}

std::vector<Var> leaves(tape::Tape& tp, std::span<const double> v) {
  std::vector<Var> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(tp.leaf(x));
  return out;
}

std::vector<double> grads_of(const std::vector<Var>& v) {
  std::vector<double> g;
  g.reserve(v.size());
  for (const auto& x : v) g.push_back(x.grad());
  return g;
}

std::vector<double> values_of(const std::vector<Var>& v) {
  std::vector<double> g;
  g.reserve(v.size());
  for (const auto& x : v) g.push_back(x.value());
  return g;
}

// --- scalar building blocks shared by the oracles ---------------------------

struct Act {
  Shape shape;  // leading axis is the folded batch
  std::vector<Var> v;
};

Act tape_conv(const Act& x, const std::vector<Var>& w, const ConvSpec& s) {
  const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const long pad = static_cast<long>(s.padding);
  const std::size_t OH = (H + 2 * s.padding - s.kernel_h) / s.stride + 1;
  const std::size_t OW = (W + 2 * s.padding - s.kernel_w) / s.stride + 1;
  Act y{{B, s.out_channels, OH, OW}, {}};
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          std::vector<Var> terms;
          for (std::size_t ci = 0; ci < C; ++ci)
            for (std::size_t kh = 0; kh < s.kernel_h; ++kh)
              for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
                const long ih = static_cast<long>(oh * s.stride + kh) - pad;
                const long iw = static_cast<long>(ow * s.stride + kw) - pad;
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                const Var& xv = x.v[((b * C + ci) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)];
                const Var& wv = w[((co * C + ci) * s.kernel_h + kh) * s.kernel_w + kw];
                terms.push_back(xv * wv);
              }
          y.v.push_back(tape::sum(terms));
        }
  return y;
}

std::vector<Var> tape_binary_weights(tape::Tape& tp, const std::vector<Var>& latent, std::size_t out_channels) {
  const std::size_t per = latent.size() / out_channels;
  std::vector<Var> wb;
  for (std::size_t c = 0; c < out_channels; ++c) {
    double m = 0.0;
    for (std::size_t k = 0; k < per; ++k) m += std::fabs(latent[c * per + k].value());
    const Var gamma = tp.constant(m / static_cast<double>(per));
    for (std::size_t k = 0; k < per; ++k) wb.push_back(gamma * tape::sign_ste(latent[c * per + k]));
  }
  return wb;
}

Act tape_lif(tape::Tape& tp, const Act& x, std::size_t T, const LIFConfig& cfg) {
  const std::size_t per_t = x.v.size() / T;
  Act y{x.shape, std::vector<Var>(x.v.size())};
  for (std::size_t j = 0; j < per_t; ++j) {
    Var post = tp.constant(0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const Var u = cfg.tau * post + x.v[t * per_t + j];
      const Var s = tape::spike(u, cfg.v_th, cfg.beta);
      const Var keep = cfg.detach_reset ? tp.constant(1.0 - s.value()) : tp.constant(1.0) - s;
      post = u * keep;
      y.v[t * per_t + j] = s;
    }
  }
  return y;
}

Act tape_agmm(tape::Tape& tp, const Act& x, const std::vector<Var>& alpha, std::size_t T, bool per_sample,
              bool approximate) {
  const std::size_t B = x.shape[0], N = B / T;
  const std::size_t chw = x.v.size() / B;
  Act y{x.shape, std::vector<Var>(x.v.size())};
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t groups = per_sample ? N : 1;
    const std::size_t span = per_sample ? chw : N * chw;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (t * N) * chw + g * span;
      std::vector<Var> xs(x.v.begin() + static_cast<std::ptrdiff_t>(base),
                          x.v.begin() + static_cast<std::ptrdiff_t>(base + span));
      Var m = tape::sum(xs) * (1.0 / static_cast<double>(span));
      if (approximate) m = tp.detach(m);
      const Var gate = tape::logistic(alpha[t] * m);
      for (std::size_t k = 0; k < span; ++k) y.v[base + k] = gate * x.v[base + k];
    }
  }
  return y;
}

}  // namespace

// --- finite-difference suites ------------------------------------------------

std::vector<CheckResult> check_conv(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::vector<CheckResult> out;
  const ConvSpec specs[] = {{3, 4, 3, 3, 1, 0}, {3, 4, 3, 3, 2, 1}, {3, 2, 2, 3, 1, 1}};
  for (const auto& spec : specs) {
    const Tensor x = random_tensor({2 * o.scale, 3, 5, 5}, rng);
    const Tensor w = random_tensor(spec.weight_shape(), rng);
    ConvCache cache;
    const Tensor y = conv2d_forward(x, w, spec, &cache);
    const Tensor R = random_tensor(y.shape(), rng);
    auto g = conv2d_backward(R, cache, w, spec);
    if (o.mutate_conv_backward)
      for (auto& v : g.input.data()) v = -v;
    std::ostringstream tag;
    tag << "conv s" << spec.stride << "p" << spec.padding << " k" << spec.kernel_h << "x" << spec.kernel_w;
    out.push_back(fd_check(tag.str() + " d/input", x, g.input,
                           [&](const Tensor& xi) { return conv2d_forward(xi, w, spec); }, R, o));
    out.push_back(fd_check(tag.str() + " d/weights", w, g.weights,
                           [&](const Tensor& wi) { return conv2d_forward(x, wi, spec); }, R, o));
  }
  return out;
}

std::vector<CheckResult> check_batchnorm(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 1);
  const Tensor x = random_tensor({8 * o.scale, 4, 3, 3}, rng, 0.3, 1.5);
  BatchNormState base(4);
  base.scale = random_tensor({4}, rng, 1.0, 0.5);
  base.shift = random_tensor({4}, rng);
  auto run = [&](const Tensor& xi, const Tensor& sc, const Tensor& sh) {
    BatchNormState s = base;
    s.scale = sc;
    s.shift = sh;
    return batchnorm_forward(xi, s);
  };
  BatchNormState s = base;
  BatchNormCache cache;
  const Tensor y = batchnorm_forward(x, s, &cache);
  const Tensor R = random_tensor(y.shape(), rng);
  const auto g = batchnorm_backward(R, cache, s);
  return {
      fd_check("batchnorm d/input", x, g.input, [&](const Tensor& xi) { return run(xi, base.scale, base.shift); }, R, o),
      fd_check("batchnorm d/scale", base.scale, g.scale,
               [&](const Tensor& sc) { return run(x, sc, base.shift); }, R, o),
      fd_check("batchnorm d/shift", base.shift, g.shift,
               [&](const Tensor& sh) { return run(x, base.scale, sh); }, R, o),
  };
}

std::vector<CheckResult> check_linear(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 2);
  const Tensor x = random_tensor({3 * o.scale, 2, 2, 2}, rng);
  const Tensor w = random_tensor({5, 8}, rng);
  const Tensor b = random_tensor({5}, rng);
  LinearCache cache;
  const Tensor y = linear_forward(x, w, &b, &cache);
  const Tensor R = random_tensor(y.shape(), rng);
  const auto g = linear_backward(R, cache, w, true);
  return {
      fd_check("linear d/input", x, g.input, [&](const Tensor& xi) { return linear_forward(xi, w, &b); }, R, o),
      fd_check("linear d/weights", w, g.weights, [&](const Tensor& wi) { return linear_forward(x, wi, &b); }, R, o),
      fd_check("linear d/bias", b, g.bias, [&](const Tensor& bi) { return linear_forward(x, w, &bi); }, R, o),
  };
}

std::vector<CheckResult> check_avgpool(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 3);
  std::vector<CheckResult> out;
  for (std::size_t k : {std::size_t{2}, std::size_t{0}}) {
    const Tensor x = random_tensor({2 * o.scale, 3, 4, 4}, rng);
    const Tensor y = avgpool_forward(x, k);
    const Tensor R = random_tensor(y.shape(), rng);
    const Tensor g = avgpool_backward(R, x.shape(), k);
    out.push_back(fd_check(k == 0 ? "avgpool global d/input" : "avgpool 2x2 d/input", x, g,
                           [&](const Tensor& xi) { return avgpool_forward(xi, k); }, R, o));
  }
  return out;
}

std::vector<CheckResult> check_add(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 4);
  const Tensor a = random_tensor({2 * o.scale, 2, 3, 3}, rng);
  const Tensor b = random_tensor(a.shape(), rng);
  const Tensor R = random_tensor(a.shape(), rng);
  const auto [ga, gb] = add_backward(R);
  return {
      fd_check("add d/a", a, ga, [&](const Tensor& ai) { return add_forward(ai, b); }, R, o),
      fd_check("add d/b", b, gb, [&](const Tensor& bi) { return add_forward(a, bi); }, R, o),
  };
}

std::vector<CheckResult> check_agmm_exact(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 5);
  std::vector<CheckResult> out;
  struct Case {
    std::size_t T, N;
    bool per_sample;
    const char* tag;
  };
  const Case cases[] = {{2, 1 * o.scale, true, "agmm exact T2 N1"},
                        {2, 2 * o.scale, true, "agmm exact T2 N2"},
                        {3, 2 * o.scale, false, "agmm exact pooled-gate T3 N2"}};
  for (const auto& c : cases) {
    const Tensor x = random_tensor({c.T * c.N, 3, 4, 4}, rng, 0.2, 1.0);
    AGMMState base(c.T);
    base.per_sample = c.per_sample;
    base.alpha = random_tensor({c.T}, rng, 0.0, 1.5);
    auto run = [&](const Tensor& xi, const Tensor& al) {
      AGMMState s = base;
      s.alpha = al;
      return agmm_forward(xi, s);
    };
    AGMMState s = base;
    const Tensor y = agmm_forward(x, s);
    const Tensor R = random_tensor(y.shape(), rng);
    const auto g = agmm_backward_exact(R, s);
    out.push_back(fd_check(std::string(c.tag) + " d/input", x, g.input,
                           [&](const Tensor& xi) { return run(xi, base.alpha); }, R, o));
    out.push_back(fd_check(std::string(c.tag) + " d/alpha", base.alpha, Tensor({c.T}, g.alpha),
                           [&](const Tensor& al) { return run(x, al); }, R, o));
  }
  return out;
}

// --- scalar-oracle suites ----------------------------------------------------

std::vector<CheckResult> check_lif_oracle(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> drive(0.7, 0.6);
  double worst_spike = 0.0, worst_grad = 0.0;
  const std::size_t traces = 200 * o.scale;
  constexpr double tol = 1e-12;
  for (bool detach : {true, false}) {
    for (std::size_t trial = 0; trial < traces; ++trial) {
      const std::size_t T = 1 + trial % 8;
      LIFConfig cfg;
      cfg.tau = trial % 5 == 0 ? 0.0 : unit(rng);
      cfg.v_th = 0.5 + unit(rng);
      cfg.beta = 0.3 + unit(rng);
      cfg.detach_reset = detach;
      Tensor x({T, 1});
      Tensor gs({T, 1});
      for (std::size_t t = 0; t < T; ++t) {
        x[t] = drive(rng);
        gs[t] = drive(rng);
      }
      LIFCache cache;
      const Tensor s = lif_forward(x, T, cfg, &cache);
      const Tensor gx = lif_backward(gs, cache, cfg);

      tape::Tape tp;
      Act xa{{T, 1}, leaves(tp, x.data())};
      const Act sa = tape_lif(tp, xa, T, cfg);
      std::vector<Var> terms;
      for (std::size_t t = 0; t < T; ++t) terms.push_back(sa.v[t] * gs[t]);
      tp.backward(tape::sum(terms));
      worst_spike = std::max(worst_spike, relative_error(s.data(), values_of(sa.v)));
      worst_grad = std::max(worst_grad, relative_error(gx.data(), grads_of(xa.v)));
    }
  }
  CheckResult a{"lif spikes vs scalar oracle", worst_spike, 0.0, worst_spike == 0.0, "T<=8 traces"};
  CheckResult b{"lif d/input vs scalar oracle", worst_grad, tol, worst_grad <= tol, "T<=8 traces, both reset modes"};
  return {a, b};
}

std::vector<CheckResult> check_binary_conv_oracle(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 7);
  std::uniform_real_distribution<double> latent(-1.3, 1.3);
  std::bernoulli_distribution fire(0.35);
  const ConvSpec spec{3, 4, 3, 3, 1, 1};
  Tensor w(spec.weight_shape());
  for (auto& v : w.data()) v = latent(rng);
  w[0] = 1.0;  // STE mask boundary
  w[1] = -1.0;
  w[2] = 0.0;
  Tensor x({2 * o.scale, 3, 5, 5});
  for (auto& v : x.data()) v = fire(rng) ? 1.0 : 0.0;

  BinaryConvLayer layer(spec, w);
  ConvCache cache;
  const Tensor y = layer.forward(x, &cache);
  const Tensor R = random_tensor(y.shape(), rng);
  Tensor gl;
  const Tensor gx = layer.backward(R, cache, gl);

  tape::Tape tp;
  Act xa{x.shape(), leaves(tp, x.data())};
  const auto lw = leaves(tp, w.data());
  const Act ya = tape_conv(xa, tape_binary_weights(tp, lw, spec.out_channels), spec);
  std::vector<Var> terms;
  for (std::size_t k = 0; k < ya.v.size(); ++k) terms.push_back(ya.v[k] * R[k]);
  tp.backward(tape::sum(terms));
  return {
      compare("binary conv output vs scalar oracle", y.data(), values_of(ya.v), o.oracle_tolerance),
      compare("binary conv d/input vs scalar oracle", gx.data(), grads_of(xa.v), o.oracle_tolerance),
      compare("binary conv d/latent (STE) vs scalar oracle", gl.data(), grads_of(lw), o.oracle_tolerance),
  };
}

std::vector<CheckResult> check_agmm_approx_oracle(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 8);
  std::vector<CheckResult> out;
  for (bool per_sample : {true, false}) {
    const std::size_t T = 2, N = 2 * o.scale;
    const Tensor x = random_tensor({T * N, 3, 2, 2}, rng, 0.2, 1.0);
    AGMMState s(T);
    s.per_sample = per_sample;
    s.alpha = random_tensor({T}, rng, 0.0, 1.5);
    const Tensor y = agmm_forward(x, s);
    const Tensor R = random_tensor(y.shape(), rng);
    const auto g = agmm_backward_approx(R, s);

    tape::Tape tp;
    Act xa{x.shape(), leaves(tp, x.data())};
    const auto al = leaves(tp, s.alpha.data());
    const Act ya = tape_agmm(tp, xa, al, T, per_sample, true);
    std::vector<Var> terms;
    for (std::size_t k = 0; k < ya.v.size(); ++k) terms.push_back(ya.v[k] * R[k]);
    tp.backward(tape::sum(terms));
    const std::string tag = per_sample ? "agmm approx" : "agmm approx pooled-gate";
    out.push_back(compare(tag + " d/input vs scalar oracle", g.input.data(), grads_of(xa.v), o.oracle_tolerance));
    out.push_back(compare(tag + " d/alpha vs scalar oracle", g.alpha, grads_of(al), o.oracle_tolerance));
  }
  return out;
}

OracleResult oracle_network(Network& net, const Tensor& input, const Tensor& grad_logits) {
  const auto& cfg = net.config();
  const std::size_t T = cfg.timesteps;
  const std::size_t B = input.dim(0), N = B / T;
  tape::Tape tp;
  auto params = net.parameters();
  std::vector<std::vector<Var>> pv;
  for (auto& p : params) pv.push_back(leaves(tp, p.tensor->data()));
  auto param = [&](std::size_t layer, const std::string& suffix) -> const std::vector<Var>& {
    for (std::size_t k = 0; k < params.size(); ++k)
      if (params[k].layer == layer && params[k].name.ends_with(suffix)) return pv[k];
    throw StateError("oracle: layer " + std::to_string(layer) + " has no parameter " + suffix);
  };

  std::vector<Act> outs(cfg.layers.size());
  Act x{input.shape(), {}};
  for (double v : input.data()) x.v.push_back(tp.constant(v));
  const Act* cur = &x;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& L = cfg.layers[i];
    Act y;
    switch (L.kind) {
      case LayerKind::conv:
        y = tape_conv(*cur, param(i, ".weight"), L.conv);
        break;
      case LayerKind::binary_conv:
        y = tape_conv(*cur, tape_binary_weights(tp, param(i, ".latent"), L.conv.out_channels), L.conv);
        break;
      case LayerKind::batchnorm: {
        const auto& sc = param(i, ".scale");
        const auto& sh = param(i, ".shift");
        const std::size_t C = cur->shape[1];
        const std::size_t inner = cur->v.size() / (cur->shape[0] * C);
        const double eps = BatchNormState{}.epsilon;
        y = {cur->shape, std::vector<Var>(cur->v.size())};
        for (std::size_t c = 0; c < C; ++c) {
          std::vector<std::size_t> idx;
          for (std::size_t b = 0; b < cur->shape[0]; ++b)
            for (std::size_t k = 0; k < inner; ++k) idx.push_back((b * C + c) * inner + k);
          const double M = static_cast<double>(idx.size());
          std::vector<Var> xs;
          for (auto j : idx) xs.push_back(cur->v[j]);
          const Var mean = tape::sum(xs) * (1.0 / M);
          std::vector<Var> sq;
          for (auto j : idx) {
            const Var d = cur->v[j] - mean;
            sq.push_back(d * d);
          }
          const Var inv = tp.constant(1.0) / tape::sqrt(tape::sum(sq) * (1.0 / M) + eps);
          for (auto j : idx) y.v[j] = (cur->v[j] - mean) * inv * sc[c] + sh[c];
        }
        break;
      }
      case LayerKind::lif:
        y = tape_lif(tp, *cur, T, cfg.lif);
        break;
      case LayerKind::agmm:
        y = tape_agmm(tp, *cur, param(i, ".alpha"), T, cfg.agmm_per_sample,
                      cfg.agmm_backward == AgmmBackward::approximate);
        break;
      case LayerKind::avgpool: {
        const std::size_t C = cur->shape[1], H = cur->shape[2], W = cur->shape[3];
        const std::size_t k = L.pool_kernel == 0 ? H : L.pool_kernel;
        const std::size_t OH = H / k, OW = W / k;
        y = {{cur->shape[0], C, OH, OW}, {}};
        for (std::size_t b = 0; b < cur->shape[0]; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < OH; ++oh)
              for (std::size_t ow = 0; ow < OW; ++ow) {
                std::vector<Var> terms;
                for (std::size_t dh = 0; dh < k; ++dh)
                  for (std::size_t dw = 0; dw < k; ++dw)
                    terms.push_back(cur->v[((b * C + c) * H + oh * k + dh) * W + ow * k + dw]);
                y.v.push_back(tape::sum(terms) * (1.0 / static_cast<double>(k * k)));
              }
        break;
      }
      case LayerKind::linear: {
        const auto& w = param(i, ".weight");
        const auto& bias = param(i, ".bias");
        const std::size_t rows = cur->shape[0];
        const std::size_t F = cur->v.size() / rows, K = L.out_features;
        y = {{rows, K}, {}};
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < K; ++k) {
            std::vector<Var> terms;
            for (std::size_t f = 0; f < F; ++f) terms.push_back(w[k * F + f] * cur->v[r * F + f]);
            y.v.push_back(tape::sum(terms) + bias[k]);
          }
        break;
      }
      case LayerKind::skip_add: {
        const Act& src = outs[L.skip_source];
        y = {cur->shape, {}};
        for (std::size_t k = 0; k < cur->v.size(); ++k) y.v.push_back(cur->v[k] + src.v[k]);
        break;
      }
    }
    outs[i] = std::move(y);
    cur = &outs[i];
  }
  const std::size_t K = cur->shape[1];
  OracleResult res;
  std::vector<Var> terms;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<Var> over_t;
      for (std::size_t t = 0; t < T; ++t) over_t.push_back(cur->v[(t * N + n) * K + k]);
      const Var logit = tape::sum(over_t) * (1.0 / static_cast<double>(T));
      res.logits.push_back(logit.value());
      terms.push_back(logit * grad_logits[n * K + k]);
    }
  tp.backward(tape::sum(terms));
  for (const auto& v : pv) res.grads.push_back(grads_of(v));
  return res;
}

std::vector<CheckResult> check_network_oracle(const SuiteOptions& o) {
  std::vector<CheckResult> out;
  struct Case {
    Variant variant;
    AgmmBackward mode;
    bool per_sample;
    bool detach;
    const char* tag;
  };
  const Case cases[] = {
      {Variant::fp, AgmmBackward::exact, true, true, "net fp"},
      {Variant::binary, AgmmBackward::exact, true, true, "net binary"},
      {Variant::binary_agmm, AgmmBackward::exact, true, true, "net binary-agmm exact"},
      {Variant::binary_agmm, AgmmBackward::approximate, true, true, "net binary-agmm approx"},
      {Variant::binary_agmm, AgmmBackward::exact, false, false, "net binary-agmm pooled-gate, reset attached"},
  };
  std::uint64_t k = 0;
  for (const auto& c : cases) {
    DeskOptions d;
    d.variant = c.variant;
    d.input_shape = {2, 6, 6};
    d.classes = 3;
    d.width = 3;
    d.blocks = 2;
    d.timesteps = 2;
    d.seed = o.seed + k++;
    NetworkConfig cfg = desk_network(d);
    cfg.agmm_backward = c.mode;
    cfg.agmm_per_sample = c.per_sample;
    cfg.lif.detach_reset = c.detach;
    Network net(cfg);
    std::mt19937_64 rng(o.seed + 100 + k);
    // Randomize every parameter so BN affine terms, biases and alpha are
    // exercised away from their initial values.
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (auto& p : net.parameters())
      for (auto& v : p.tensor->data()) v = p.name.ends_with(".scale") ? 0.5 + std::fabs(u(rng)) : u(rng);
    std::uniform_real_distribution<double> pix(0.0, 1.0);
    const std::size_t N = 2 * o.scale;
    Tensor img({N, 2, 6, 6});
    for (auto& v : img.data()) v = pix(rng);
    Tensor x = fold_time(std::vector<Tensor>(d.timesteps, img));
    const Tensor R = random_tensor({N, 3}, rng);

    net.zero_grad();
    const Tensor logits = net.forward(x, true);
    net.backward(R);
    const OracleResult ref = oracle_network(net, x, R);
    out.push_back(compare(std::string(c.tag) + " logits", logits.data(), ref.logits, o.oracle_tolerance));
    auto params = net.parameters();
    double worst = 0.0;
    std::string worst_name;
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double e = relative_error(params[p].tensor->grad(), ref.grads[p]);
      if (e >= worst) {
        worst = e;
        worst_name = params[p].name;
      }
    }
    CheckResult r{std::string(c.tag) + " parameter grads", worst, o.oracle_tolerance, worst <= o.oracle_tolerance,
                  "worst: " + worst_name};
    out.push_back(r);
  }
  return out;
}

std::vector<CheckResult> run_all(const SuiteOptions& o) {
  std::vector<CheckResult> all;
  for (auto* suite : {check_conv, check_batchnorm, check_linear, check_avgpool, check_add, check_agmm_exact,
                      check_lif_oracle, check_binary_conv_oracle, check_agmm_approx_oracle, check_network_oracle}) {
    auto r = suite(o);
    all.insert(all.end(), r.begin(), r.end());
  }
  return all;
}

std::vector<GapSize> agmm_gap_study(std::span<const std::size_t> chw_sizes, std::size_t trials, std::uint64_t seed) {
  std::vector<GapSize> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ua(-1.0, 1.0);
  for (std::size_t chw : chw_sizes) {
    GapSize gs;
    gs.chw = chw;
    std::vector<double> gaps;
    for (std::size_t k = 0; k < trials; ++k) {
      Tensor x({1, chw, 1, 1});
      Tensor g({1, chw, 1, 1});
      for (auto& v : x.data()) v = nd(rng);
      for (auto& v : g.data()) v = nd(rng);
      AGMMState s(1);
      s.alpha[0] = ua(rng);
      agmm_forward(x, s);
      const auto ex = agmm_backward_exact(g, s);
      const auto ap = agmm_backward_approx(g, s);
      GapSample smp;
      smp.chw = chw;
      smp.alpha = s.alpha[0];
      for (std::size_t j = 0; j < chw; ++j) {
        smp.max_gap = std::max(smp.max_gap, std::fabs(ex.input[j] - ap.input[j]));
        smp.grad_scale = std::max(smp.grad_scale, std::fabs(ex.input[j]));
      }
      smp.bound = 0.25 * std::fabs(smp.alpha) * std::fabs(dot(g, x)) / static_cast<double>(chw);
      // The gap is a difference of two O(grad) numbers, so it carries rounding of
      // a few ulps of grad_scale; near gate 0.5 the bound is attained exactly.
      const double slack = 16.0 * std::numeric_limits<double>::epsilon() * smp.grad_scale;
      if (smp.max_gap > smp.bound + slack) ++gs.violations;
      if (smp.bound > 0.0) gs.worst_ratio = std::max(gs.worst_ratio, smp.max_gap / smp.bound);
      gaps.push_back(smp.max_gap);
      gs.samples.push_back(smp);
    }
    std::sort(gaps.begin(), gaps.end());
    const std::size_t m = gaps.size();
    gs.median_gap = m % 2 ? gaps[m / 2] : 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]);
    out.push_back(std::move(gs));
  }
  return out;
}

}  // namespace bsnn::verify
