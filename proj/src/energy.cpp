#include "bsnn/energy.hpp"

#include "bsnn/error.hpp"

namespace bsnn {

void EnergyModel::validate() const {
  if (!(energy_per_accumulate_pj > 0.0) || !(energy_per_mac_pj > 0.0))
    throw DomainError("energy constants must be positive");
}

std::vector<std::size_t> axis_fanout(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  ConvSpec probe{1, 1, kernel, kernel, stride, padding};
  const std::size_t out = probe.out_extent(in, kernel);
  std::vector<std::size_t> fan(in, 0);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t k = 0; k < kernel; ++k) {
      const std::size_t pos = o * stride + k;
      if (pos >= padding && pos - padding < in) ++fan[pos - padding];
    }
  return fan;
}

double count_sops(const Tensor& spikes, const ConvSpec& spec) {
  if (spikes.rank() != 4 || spikes.dim(1) != spec.in_channels)
    throw ShapeError("count_sops expects [B," + std::to_string(spec.in_channels) + ",H,W], got " +
                     shape_string(spikes.shape()));
  const std::size_t B = spikes.dim(0), C = spikes.dim(1), H = spikes.dim(2), W = spikes.dim(3);
  const auto fh = axis_fanout(H, spec.kernel_h, spec.stride, spec.padding);
  const auto fw = axis_fanout(W, spec.kernel_w, spec.stride, spec.padding);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          if (spikes.at(b, c, h, w) != 0.0)
            total += static_cast<double>(spec.out_channels * fh[h] * fw[w]);
  return total;
}

double dense_conv_macs(const ConvSpec& spec, const Shape& chw) {
  const Shape out = spec.output_shape({1, chw[0], chw[1], chw[2]});
  return static_cast<double>(spec.out_channels * spec.in_channels * spec.kernel_h * spec.kernel_w * out[2] * out[3]);
}

std::size_t layer_param_bits(Network& net, std::size_t i) {
  const auto& L = net.config().layers.at(i);
  switch (L.kind) {
    case LayerKind::conv:
      return shape_volume(L.conv.weight_shape()) * 32;
    case LayerKind::binary_conv:
      return shape_volume(L.conv.weight_shape()) + L.conv.out_channels * 32;
    case LayerKind::batchnorm:
      return net.input_shape(i)[0] * 2 * 64;
    case LayerKind::agmm:
      return net.config().timesteps * 64;
    case LayerKind::linear:
      return (L.out_features * shape_volume(net.input_shape(i)) + L.out_features) * 32;
    default:
      return 0;
  }
}

std::size_t model_size_bits(Network& net) {
  std::size_t bits = 0;
  for (std::size_t i = 0; i < net.size(); ++i) bits += layer_param_bits(net, i);
  return bits;
}

double estimate_energy(double sops, double macs, const EnergyModel& model) {
  model.validate();
  const double pj = sops * model.energy_per_accumulate_pj + macs * model.energy_per_mac_pj;
  return pj / 1e9;
}

ProfileReport profile_network(Network& net, const Dataset& data, const EnergyModel& model, InputEncoding encoding,
                              std::size_t batch_size) {
  data.validate();
  model.validate();
  const std::size_t T = net.config().timesteps;
  ProfileReport rep;
  rep.samples = data.size();
  rep.layers.resize(net.size());
  std::vector<double> spikes(net.size(), 0.0), slots(net.size(), 0.0);
  for (std::size_t i = 0; i < net.size(); ++i) {
    rep.layers[i].layer = i;
    rep.layers[i].type = to_string(net.kind(i));
    rep.layers[i].param_bits = layer_param_bits(net, i);
  }
  net.set_telemetry(false);
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - b);
    const Tensor x = encode_batch(slice_leading(data.images, b, n), T, encoding, b + 1);
    net.forward(x, false);
    for (std::size_t i = 0; i < net.size(); ++i) {
      const auto& L = net.config().layers[i];
      auto& lp = rep.layers[i];
      const bool spike_fed = i > 0 && net.kind(i - 1) == LayerKind::lif;
      switch (L.kind) {
        case LayerKind::lif: {
          const Tensor& s = net.output(i);
          for (double v : s.data()) spikes[i] += v;
          slots[i] += static_cast<double>(s.size());
          break;
        }
        case LayerKind::conv:
        case LayerKind::binary_conv:
          if (spike_fed)
            lp.sops += count_sops(net.input_of(i), L.conv);
          else
            lp.macs += dense_conv_macs(L.conv, net.input_shape(i)) * static_cast<double>(T * n);
          break;
        case LayerKind::agmm:
          lp.macs += static_cast<double>(shape_volume(net.input_shape(i)) * T * n);
          break;
        case LayerKind::linear:
          lp.macs += static_cast<double>(L.out_features * shape_volume(net.input_shape(i)) * T * n);
          break;
        default:
          break;
      }
    }
  }
  const double N = static_cast<double>(data.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& lp = rep.layers[i];
    if (net.kind(i) == LayerKind::lif) {
      lp.has_rate = true;
      lp.firing_rate = slots[i] > 0.0 ? spikes[i] / slots[i] : 0.0;
    }
    lp.sops /= N;
    lp.macs /= N;
    rep.total_sops += lp.sops;
    rep.total_macs += lp.macs;
    rep.model_bits += lp.param_bits;
  }
  rep.energy_mj = estimate_energy(rep.total_sops, rep.total_macs, model);
  return rep;
}

}  // namespace bsnn
