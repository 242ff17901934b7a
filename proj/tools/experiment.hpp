#pragma once

// Experiment orchestration behind the bsnn command line: configuration files,
// training runs, CSV/JSON outputs and SVG charts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "bsnn/data.hpp"
#include "bsnn/energy.hpp"
#include "bsnn/network.hpp"
#include "bsnn/train.hpp"
#include "bsnn/verify/gradcheck.hpp"

namespace bsnn::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitCheckFailed = 2;
inline constexpr int kExitIo = 3;

inline constexpr int kCsvSchemaVersion = 1;

struct DatasetSection {
  std::string source = "synthetic";  // synthetic | idx
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_limit = 0;  // 0 keeps every sample
  std::size_t test_limit = 0;
  BlobOptions blobs;
  std::size_t test_per_class = 30;
};

struct NetworkSection {
  std::size_t width = 16;
  std::size_t blocks = 3;
  bool skip = true;
  bool downsample = true;
  std::size_t timesteps = 2;
  LIFConfig lif;
  AgmmBackward agmm_backward = AgmmBackward::exact;
  bool agmm_per_sample = true;
  double alpha_init = 1.0;
  bool clamp_latent = true;
};

struct OptimizerSection {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double lr0 = 0.1;
  double momentum = 0.9;
};

struct TelemetrySection {
  bool gate_stats = true;
  bool checkpoints = true;
};

struct FlipGridSection {
  std::vector<double> mus{-1.0, -0.5, 0.0, 0.5, 1.0};
  std::vector<double> sigmas{0.25, 0.6875, 1.125, 1.5625, 2.0};
  std::vector<double> ratios{-2.0, -1.0, 0.0, 1.0, 2.0};  // omega / eta
  double eta = 0.1;
  std::size_t samples = 1000000;
  std::uint64_t seed = 2024;
  std::vector<double> gates{0.25, 0.5, 0.75};
};

struct ExperimentConfig {
  DatasetSection dataset;
  NetworkSection network;
  OptimizerSection optimizer;
  TelemetrySection telemetry;
  FlipGridSection flipprob;
  EnergyModel energy;
  InputEncoding encoding = InputEncoding::constant;
  Variant variant = Variant::binary_agmm;
  std::vector<Variant> variants{Variant::fp, Variant::binary, Variant::binary_agmm};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "out";

  void validate() const;
};

/// Parses a JSON configuration. Missing keys keep their defaults; unknown keys
/// and type errors raise ConfigError naming the key and its line.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& c);

/// BSNN_OUT_DIR, when set and non-empty, replaces the configured directory.
std::filesystem::path resolve_output_dir(const ExperimentConfig& c);

NetworkConfig make_network_config(const ExperimentConfig& c, Variant v, std::uint64_t seed, const Shape& input_chw,
                                  std::size_t classes);

struct DataSplits {
  Dataset train;
  Dataset test;
  Shape input_chw() const { return {train.images.dim(1), train.images.dim(2), train.images.dim(3)}; }
};
DataSplits load_data(const ExperimentConfig& c);

struct RunResult {
  Variant variant = Variant::fp;
  std::uint64_t seed = 0;
  TrainRecord record;
  std::filesystem::path checkpoint;
};

/// Trains one variant under one seed. `log` receives one progress line per epoch.
RunResult run_training(const ExperimentConfig& c, const DataSplits& data, Variant v, std::uint64_t seed,
                       const std::filesystem::path& out_dir, std::ostream* log);

// CSV output. Numbers are printed with %.17g so reruns compare byte for byte.
std::string format_number(double v);
std::string telemetry_header(std::size_t timesteps, bool with_gates);
void write_telemetry_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs, std::size_t timesteps);
void write_gate_stats_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs, bool approximate);
void write_profile_csv(const std::filesystem::path& path, const ProfileReport& r);

/// Per-seed flip and accuracy orderings across variants.
struct OrderingSummary {
  struct SeedRow {
    std::uint64_t seed = 0;
    std::map<Variant, double> mean_flip, first_decile, last_decile, final_test_acc;
  };
  std::vector<SeedRow> seeds;
  bool has_fp = false, has_binary = false, has_agmm = false;
  bool fp_below_binary = true;     // every seed
  bool agmm_below_binary = true;   // every seed
  std::size_t agmm_acc_wins = 0;   // seeds with agmm >= binary test accuracy
  double mean_acc_gain = 0.0;      // agmm - binary, averaged over seeds
  bool accuracy_pass = true;
  std::map<Variant, bool> downward_trend;  // last decile < first decile in every seed
  bool pass() const;
};

/// Mean of the first and last ceil(10%) of a series.
std::pair<double, double> decile_means(const std::vector<double>& series);
OrderingSummary summarize_ordering(const std::vector<RunResult>& runs);
std::string ordering_to_json(const OrderingSummary& s);

struct FlipGridRow {
  double mu = 0.0, sigma = 0.0, ratio = 0.0;
  double analytic = 0.0, estimate = 0.0, stderr_hat = 0.0, tolerance = 0.0;
  bool within = false;
};

struct FlipGridReport {
  std::vector<FlipGridRow> rows;
  std::size_t within = 0;
  verify::CheckResult cdf;           // normal_cdf against the series oracle
  MonotonicityReport monotone;       // in-regime sub-grids, omega >= 0
  std::size_t gate_points = 0, gate_decreases = 0;
  bool mc_pass() const { return within == rows.size(); }
  bool monotone_pass() const { return monotone.pass && monotone.strict == monotone.comparisons; }
  bool gate_pass() const { return gate_points > 0 && gate_decreases == gate_points; }
};

/// Monotonicity over the in-regime sub-grid of each nonnegative ratio.
MonotonicityReport grid_monotonicity(const FlipGridSection& g);
/// Counts in-regime points (ratio > mu >= 0) where every gate strictly lowers P.
std::pair<std::size_t, std::size_t> gate_effect(const FlipGridSection& g);
FlipGridReport run_flip_grid(const FlipGridSection& g, bool monte_carlo = true);
void write_flip_grid_csv(const std::filesystem::path& path, const FlipGridReport& r);

/// Reads the network-config digest stored in a checkpoint header.
std::uint64_t checkpoint_digest(const std::string& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;  // ConfigError when absent
};
CsvTable read_csv(const std::filesystem::path& path);

struct PlotSpec {
  std::string x = "epoch";
  std::vector<std::string> y{"flip_ratio"};
  std::string group;  // optional: one series per distinct value
  std::string title;
};

/// Renders line charts as standalone SVG 1.1. Throws ConfigError when a named
/// column is missing or the table has no rows.
std::string render_svg(const CsvTable& table, const PlotSpec& spec);

}  // namespace bsnn::app
