#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bsnn/error.hpp"
#include "bsnn/verify/series.hpp"
#include "experiment.hpp"
#include "json.hpp"

using namespace bsnn;
using namespace bsnn::app;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::size_t epochs = 0;
  std::size_t batch = 0;
  std::string backward;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON configuration file (defaults apply when omitted)");
  cmd->add_option("-o,--out", o.out, "output directory (BSNN_OUT_DIR wins over the config, this flag wins over both)");
  cmd->add_option("--seed", o.seeds, "seed(s), replacing the configured list");
  cmd->add_option("--epochs", o.epochs, "epoch count override");
  cmd->add_option("--batch-size", o.batch, "minibatch size override");
  cmd->add_option("--agmm-backward", o.backward, "exact | approximate")->check(CLI::IsMember({"exact", "approximate"}));
}

ExperimentConfig resolve(const Overrides& o, std::filesystem::path& out_dir) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.epochs > 0) c.optimizer.epochs = o.epochs;
  if (o.batch > 0) c.optimizer.batch_size = o.batch;
  if (!o.backward.empty())
    c.network.agmm_backward = o.backward == "exact" ? AgmmBackward::exact : AgmmBackward::approximate;
  c.validate();
  out_dir = o.out.empty() ? resolve_output_dir(c) : std::filesystem::path(o.out);
  std::filesystem::create_directories(out_dir);
  return c;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError(p.string(), "cannot open for writing");
  out << s;
  out.close();
  if (!out) throw IoError(p.string(), "write failed");
}

std::vector<RunResult> train_all(const ExperimentConfig& c, const DataSplits& data, const std::vector<Variant>& variants,
                                 const std::filesystem::path& out_dir) {
  std::vector<RunResult> runs;
  for (Variant v : variants)
    for (std::uint64_t s : c.seeds) runs.push_back(run_training(c, data, v, s, out_dir, &std::cerr));
  return runs;
}

// Records what was run; no timestamps so reruns produce the same bytes.
void write_manifest(const std::filesystem::path& out_dir, const ExperimentConfig& c, const std::vector<RunResult>& runs,
                    const std::string& command) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["csv_schema_version"] = kCsvSchemaVersion;
  m["config"] = nlohmann::ordered_json::parse(config_to_json(c));
  auto& r = m["runs"] = nlohmann::ordered_json::array();
  for (const auto& run : runs) {
    nlohmann::ordered_json e;
    e["variant"] = to_string(run.variant);
    e["seed"] = run.seed;
    e["epochs"] = run.record.epochs.size();
    if (!run.record.epochs.empty()) e["final_test_acc"] = run.record.epochs.back().test_acc;
    if (!run.checkpoint.empty()) e["checkpoint"] = run.checkpoint.filename().string();
    r.push_back(e);
  }
  write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

void write_gate_stats_if_needed(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                const std::vector<RunResult>& runs) {
  if (!c.telemetry.gate_stats) return;
  if (std::none_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.variant == Variant::binary_agmm; })) return;
  write_gate_stats_csv(out_dir / "gate_stats.csv", runs, c.network.agmm_backward == AgmmBackward::approximate);
}

int cmd_train(const Overrides& o, const std::string& variant) {
  std::filesystem::path out_dir;
  ExperimentConfig c = resolve(o, out_dir);
  if (!variant.empty()) c.variant = parse_variant(variant);
  const DataSplits data = load_data(c);
  const auto runs = train_all(c, data, {c.variant}, out_dir);
  write_telemetry_csv(out_dir / "telemetry.csv", runs, c.network.timesteps);
  write_gate_stats_if_needed(c, out_dir, runs);
  write_manifest(out_dir, c, runs, "train");
  std::cout << "wrote " << (out_dir / "telemetry.csv").string() << '\n';
  return kExitOk;
}

int cmd_compare(const Overrides& o, const std::vector<std::string>& names, bool strict) {
  std::filesystem::path out_dir;
  ExperimentConfig c = resolve(o, out_dir);
  if (!names.empty()) {
    c.variants.clear();
    for (const auto& n : names) c.variants.push_back(parse_variant(n));
  }
  const DataSplits data = load_data(c);
  const auto runs = train_all(c, data, c.variants, out_dir);
  write_telemetry_csv(out_dir / "compare.csv", runs, c.network.timesteps);
  write_gate_stats_if_needed(c, out_dir, runs);
  const OrderingSummary s = summarize_ordering(runs);
  const std::string summary = ordering_to_json(s);
  write_text(out_dir / "compare_summary.json", summary);
  write_manifest(out_dir, c, runs, "compare");
  std::cout << summary;
  std::cout << "ordering " << (s.pass() ? "PASS" : "FAIL") << '\n';
  return strict && !s.pass() ? kExitCheckFailed : kExitOk;
}

int cmd_flipprob(const Overrides& o, std::size_t samples, double gate, bool no_mc) {
  std::filesystem::path out_dir;
  ExperimentConfig c = resolve(o, out_dir);
  FlipGridSection g = c.flipprob;
  if (samples > 0) g.samples = samples;
  if (!o.seeds.empty()) g.seed = o.seeds.front();
  if (gate > 0.0) {
    // Gate-scaled rerun: every (mu, sigma) shrinks by the same factor.
    for (auto& m : g.mus) m *= gate;
    for (auto& s : g.sigmas) s *= gate;
  }
  if (g.samples < kMinMonteCarloSamples) throw ConfigError("flipprob.samples must be at least 10000");
  const FlipGridReport r = run_flip_grid(g, !no_mc);
  const auto csv = out_dir / (gate > 0.0 ? "flipprob_gate.csv" : "flipprob.csv");
  write_flip_grid_csv(csv, r);

  bool ok = r.cdf.pass && r.monotone_pass() && r.gate_pass();
  std::printf("grid %zu points, eta %g, %zu samples\n", r.rows.size(), g.eta, g.samples);
  if (!no_mc) {
    std::printf("monte carlo within 3 SE: %zu/%zu %s\n", r.within, r.rows.size(), r.mc_pass() ? "PASS" : "FAIL");
    ok = ok && r.mc_pass();
  }
  std::printf("normal cdf vs series: max error %.3g (tol %.0e) %s\n", r.cdf.error, r.cdf.tolerance,
              r.cdf.pass ? "PASS" : "FAIL");
  std::printf("monotonicity (in-regime, omega >= 0): %zu comparisons, %zu strict %s\n", r.monotone.comparisons,
              r.monotone.strict, r.monotone_pass() ? "PASS" : "FAIL");
  for (const auto& v : r.monotone.violations) std::printf("  %s\n", v.c_str());
  std::printf("gate scaling lowers P: %zu/%zu %s\n", r.gate_decreases, r.gate_points, r.gate_pass() ? "PASS" : "FAIL");
  std::printf("wrote %s\n", csv.string().c_str());
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_gradcheck(std::size_t scale, std::uint64_t seed, bool mutate, std::size_t trials) {
  verify::SuiteOptions so;
  so.scale = scale;
  so.seed = seed;
  so.mutate_conv_backward = mutate;
  bool ok = true;
  for (const auto& r : verify::run_all(so)) {
    std::printf("%-40s worst %.3e  tol %.0e  %s\n", r.name.c_str(), r.error, r.tolerance, r.pass ? "PASS" : "FAIL");
    if (!r.pass && !r.detail.empty()) std::printf("    %s\n", r.detail.c_str());
    ok = ok && r.pass;
  }
  const std::vector<std::size_t> sizes{64, 1024, 4096};
  std::printf("agmm approximate-vs-exact input gradient (%zu trials per size)\n", trials);
  for (const auto& g : verify::agmm_gap_study(sizes, trials, seed)) {
    std::printf("  CHW %5zu  median gap %.3e  worst gap/bound %.3f  over bound %zu\n", g.chw, g.median_gap,
                g.worst_ratio, g.violations);
    ok = ok && g.violations == 0;
  }
  std::printf("gradcheck %s\n", ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_profile(const Overrides& o, const std::vector<std::string>& checkpoints) {
  std::filesystem::path out_dir;
  ExperimentConfig c = resolve(o, out_dir);
  const DataSplits data = load_data(c);
  const auto chw = data.input_chw();
  std::map<Variant, ProfileReport> reports;
  nlohmann::ordered_json summary;
  summary["csv_schema_version"] = kCsvSchemaVersion;
  auto& list = summary["profiles"] = nlohmann::ordered_json::array();
  for (const auto& path : checkpoints) {
    const std::uint64_t digest = checkpoint_digest(path);
    std::optional<Variant> found;
    for (Variant v : {Variant::fp, Variant::binary, Variant::binary_agmm})
      if (make_network_config(c, v, 0, chw, data.train.classes).digest() == digest) found = v;
    if (!found) throw ConfigError(path + ": checkpoint does not match any variant of this configuration");
    Network net(make_network_config(c, *found, 0, chw, data.train.classes));
    load_checkpoint(net, path);
    const ProfileReport r = profile_network(net, data.test, c.energy, c.encoding);
    const auto csv = out_dir / ("profile_" + to_string(*found) + ".csv");
    write_profile_csv(csv, r);
    nlohmann::ordered_json e;
    e["variant"] = to_string(*found);
    e["checkpoint"] = std::filesystem::path(path).filename().string();
    e["samples"] = r.samples;
    e["sops_per_sample"] = r.total_sops;
    e["macs_per_sample"] = r.total_macs;
    e["energy_mj_per_sample"] = r.energy_mj;
    e["model_bits"] = r.model_bits;
    e["model_mb"] = r.model_mb();
    list.push_back(e);
    std::printf("%-12s sops %.6g  macs %.6g  energy %.6g mJ  size %.4f MB  -> %s\n", to_string(*found).c_str(),
                r.total_sops, r.total_macs, r.energy_mj, r.model_mb(), csv.string().c_str());
    reports[*found] = r;
  }
  if (reports.count(Variant::binary) && reports.count(Variant::binary_agmm)) {
    const double a = reports[Variant::binary_agmm].total_sops, b = reports[Variant::binary].total_sops;
    summary["agmm_sops_le_binary"] = a <= b;
    std::printf("agmm sops %s vanilla binary (%.6g vs %.6g); reported only\n", a <= b ? "<=" : ">", a, b);
  }
  write_text(out_dir / "profile_summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_plot(const std::string& csv, const std::string& out, const PlotSpec& spec) {
  const CsvTable t = read_csv(csv);
  const std::string svg = render_svg(t, spec);  // throws before any file is created
  const std::filesystem::path dest = out.empty() ? std::filesystem::path(csv).replace_extension(".svg") : std::filesystem::path(out);
  if (dest.has_parent_path()) std::filesystem::create_directories(dest.parent_path());
  write_text(dest, svg);
  std::cout << "wrote " << dest.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binary spiking network experiments"};
  app.require_subcommand(1);

  Overrides o;
  std::string variant;
  auto* train = app.add_subcommand("train", "train one variant over the configured seeds");
  add_common(train, o);
  train->add_option("--variant", variant, "fp | binary | binary-agmm");

  std::vector<std::string> variants;
  bool strict = false;
  auto* compare = app.add_subcommand("compare", "train several variants with shared seeds and summarise the ordering");
  add_common(compare, o);
  compare->add_option("--variants", variants, "variant list")->delimiter(',');
  compare->add_flag("--strict", strict, "exit 2 when an ordering check fails");

  std::size_t samples = 0;
  double gate = 0.0;
  bool no_mc = false;
  auto* flip = app.add_subcommand("flipprob", "analytic vs Monte Carlo flip probability over a grid");
  add_common(flip, o);
  flip->add_option("--samples", samples, "Monte Carlo samples per grid point");
  flip->add_option("--gate", gate, "scale every mu and sigma by this factor")->check(CLI::Range(0.0, 1.0));
  flip->add_flag("--no-mc", no_mc, "analytic values and checks only");

  std::size_t scale = 1, trials = 100;
  std::uint64_t gc_seed = 42;
  bool mutate = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference and scalar-oracle gradient suites");
  grad->add_option("--scale", scale, "batch multiplier for every problem")->check(CLI::PositiveNumber);
  grad->add_option("--seed", gc_seed, "random seed");
  grad->add_option("--trials", trials, "agmm gap trials per size")->check(CLI::PositiveNumber);
  grad->add_flag("--mutate-conv-backward", mutate, "negate the conv input gradient (the conv check must fail)");

  std::vector<std::string> checkpoints;
  auto* prof = app.add_subcommand("profile", "firing rates, SOPs, MACs, size and energy of trained checkpoints");
  add_common(prof, o);
  prof->add_option("--checkpoint", checkpoints, "checkpoint file (repeatable)")->required();

  std::string csv, svg_out, y_list;
  PlotSpec spec;
  auto* plot = app.add_subcommand("plot", "render CSV columns as an SVG line chart");
  plot->add_option("csv", csv, "input CSV")->required();
  plot->add_option("-o,--out", svg_out, "output SVG (defaults to the CSV name with .svg)");
  plot->add_option("--x", spec.x, "x column");
  plot->add_option("--y", spec.y, "y column(s)")->delimiter(',');
  plot->add_option("--group", spec.group, "one series per distinct value of this column");
  plot->add_option("--title", spec.title, "chart title");

  auto* defaults = app.add_subcommand("defaults", "print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(o, variant);
    if (*compare) return cmd_compare(o, variants, strict);
    if (*flip) return cmd_flipprob(o, samples, gate, no_mc);
    if (*grad) return cmd_gradcheck(scale, gc_seed, mutate, trials);
    if (*prof) return cmd_profile(o, checkpoints);
    if (*plot) return cmd_plot(csv, svg_out, spec);
    if (*defaults) {
      std::cout << config_to_json(ExperimentConfig{});
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IdxError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
