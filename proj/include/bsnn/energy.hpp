#pragma once

// Spike-driven cost accounting. A conv layer fed by spikes performs one
// accumulate (SOP) for every (input spike, reachable output) pair; layers fed
// by analog values (first conv, readout) and the AGMM gate multiply cost dense
// multiply-accumulates (MACs).

#include <cstddef>
#include <string>
#include <vector>

#include "bsnn/data.hpp"
#include "bsnn/network.hpp"
#include "bsnn/train.hpp"

namespace bsnn {

struct EnergyModel {
  double energy_per_accumulate_pj = 0.9;
  double energy_per_mac_pj = 4.6;
  void validate() const;
};

struct LayerProfile {
  std::size_t layer = 0;
  std::string type;
  bool has_rate = false;
  double firing_rate = 0.0;  // LIF layers only
  double sops = 0.0;         // per sample
  double macs = 0.0;         // per sample
  std::size_t param_bits = 0;
};

struct ProfileReport {
  std::vector<LayerProfile> layers;
  double total_sops = 0.0;
  double total_macs = 0.0;
  std::size_t model_bits = 0;
  double energy_mj = 0.0;
  std::size_t samples = 0;

  double model_bytes() const { return static_cast<double>(model_bits) / 8.0; }
  double model_mb() const { return model_bytes() / (1024.0 * 1024.0); }
};

/// Per-position count of (output position, kernel offset) pairs that read input
/// position `p` along one axis.
std::vector<std::size_t> axis_fanout(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Exact SOPs for a batch of spike maps [B, Cin, H, W] entering `spec`.
double count_sops(const Tensor& spikes, const ConvSpec& spec);

/// Dense MACs of one forward over one timestep and one sample.
double dense_conv_macs(const ConvSpec& spec, const Shape& input_chw);

/// 1 bit per binary weight + 32-bit gamma per channel; 32 bits per FP weight
/// or bias; 64 bits per BN scale/shift and per AGMM alpha.
std::size_t layer_param_bits(Network& net, std::size_t layer);
std::size_t model_size_bits(Network& net);

/// sops * e_ac + macs * e_mac, converted from pJ to mJ.
double estimate_energy(double sops, double macs, const EnergyModel& model);

/// Runs inference over `data` and tallies rates, SOPs and MACs per sample.
ProfileReport profile_network(Network& net, const Dataset& data, const EnergyModel& model,
                              InputEncoding encoding = InputEncoding::constant, std::size_t batch_size = 128);

}  // namespace bsnn
