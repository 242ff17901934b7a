#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsnn/data.hpp"
#include "bsnn/network.hpp"

namespace bsnn {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dL/dlogits, (softmax - onehot) / N
};

/// Softmax cross-entropy averaged over the batch.
LossResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

/// 0.5 * lr0 * (1 + cos(pi * epoch / total)), epoch counted from 0.
double cosine_lr(std::size_t epoch, std::size_t total, double lr0);

struct OptimizerState {
  double lr0 = 0.1;
  double momentum = 0.9;
  std::size_t epoch = 0;
  std::size_t total_epochs = 60;
  std::vector<std::vector<double>> buffers;  // one per parameter, lazily sized
};

/// buffer <- momentum*buffer + grad; param <- param - lr*buffer. Binary latent
/// weights are clamped to [-1, 1] afterwards when `clamp` is set.
void sgd_step(std::span<const ParamRef> params, OptimizerState& opt, double lr, bool clamp);

struct TrainOptions {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double lr0 = 0.1;
  double momentum = 0.9;
  InputEncoding encoding = InputEncoding::constant;
  std::uint64_t seed = 1;
};

/// Per-(layer, timestep) gate statistics for one epoch.
struct GateCell {
  std::size_t layer = 0;
  std::size_t timestep = 0;
  double gate_mean = 0.0;
  double mean_before = 0.0;
  double var_before = 0.0;
  double mean_after = 0.0;
  double var_after = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_acc = 0.0;
  double test_acc = 0.0;
  double loss = 0.0;
  double flip_ratio = 0.0;
  double fp_flip_ratio = 0.0;  // first conv + readout, for reference
  double grad_mean = 0.0;      // tracked-layer weight gradients, pooled
  double grad_var = 0.0;
  double lr = 0.0;
  std::vector<double> gate_means;  // per timestep, averaged over AGMM layers
  std::vector<GateCell> gate_cells;
  std::vector<std::pair<std::size_t, double>> firing_rates;  // (LIF layer, rate)
  std::vector<std::pair<std::size_t, RunningStats>> layer_grads;
  double seconds = 0.0;
};

struct TrainRecord {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
};

class Trainer {
 public:
  Trainer(Network& net, TrainOptions options);

  /// Runs one epoch over shuffled minibatches, then evaluates on `test` (if
  /// given) and measures the sign-flip ratio against the previous epoch.
  EpochRecord train_epoch(const Dataset& train, const Dataset* test);
  TrainRecord fit(const Dataset& train, const Dataset* test);

  const OptimizerState& optimizer() const { return opt_; }

 private:
  Network& net_;
  TrainOptions options_;
  OptimizerState opt_;
  SignSnapshot last_;
  SignSnapshot last_fp_;
};

/// Accuracy in inference mode.
double evaluate(Network& net, const Dataset& data, InputEncoding encoding = InputEncoding::constant,
                std::uint64_t seed = 0, std::size_t batch_size = 256);

/// Encodes a minibatch of images for the network's timestep count.
Tensor encode_batch(const Tensor& images, std::size_t timesteps, InputEncoding encoding, std::uint64_t seed);

inline constexpr char kCheckpointMagic[4] = {'B', 'S', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "BSNN" | u32 version | u64 config digest | u32 tensor count |
/// per tensor: u64 length, length x f64. All little-endian.
void save_checkpoint(Network& net, const std::string& path);
/// Throws IoError on I/O or digest mismatch.
void load_checkpoint(Network& net, const std::string& path);

}  // namespace bsnn
