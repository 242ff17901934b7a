#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bsnn/error.hpp"
#include "experiment.hpp"
#include "json.hpp"

namespace bsnn::app {

NetworkConfig make_network_config(const ExperimentConfig& c, Variant v, std::uint64_t seed, const Shape& input_chw,
                                  std::size_t classes) {
  DeskOptions o;
  o.variant = v;
  o.input_shape = input_chw;
  o.classes = classes;
  o.width = c.network.width;
  o.blocks = c.network.blocks;
  o.skip = c.network.skip;
  o.downsample = c.network.downsample;
  o.timesteps = c.network.timesteps;
  o.seed = seed;
  NetworkConfig n = desk_network(o);
  n.lif = c.network.lif;
  n.agmm_backward = c.network.agmm_backward;
  n.agmm_per_sample = c.network.agmm_per_sample;
  n.agmm_alpha_init = c.network.alpha_init;
  n.clamp_latent = c.network.clamp_latent;
  n.validate();
  return n;
}

DataSplits load_data(const ExperimentConfig& c) {
  DataSplits s;
  const auto& d = c.dataset;
  if (d.source == "synthetic") {
    s.train = synthetic_blobs(d.blobs, 0);
    BlobOptions t = d.blobs;
    t.per_class = d.test_per_class;
    s.test = synthetic_blobs(t, 1);
    s.train.split = "train";
    s.test.split = "test";
  } else {
    s.train = load_idx(d.train_images, d.train_labels, d.train_limit);
    s.test = load_idx(d.test_images, d.test_labels, d.test_limit);
    const std::size_t K = std::max(s.train.classes, s.test.classes);
    s.train.classes = s.test.classes = K;
  }
  if (d.source == "synthetic") {
    if (d.train_limit > 0 && d.train_limit < s.train.size()) s.train = s.train.subset(0, d.train_limit);
    if (d.test_limit > 0 && d.test_limit < s.test.size()) s.test = s.test.subset(0, d.test_limit);
  }
  return s;
}

RunResult run_training(const ExperimentConfig& c, const DataSplits& data, Variant v, std::uint64_t seed,
                       const std::filesystem::path& out_dir, std::ostream* log) {
  Network net(make_network_config(c, v, seed, data.input_chw(), data.train.classes));
  TrainOptions t;
  t.epochs = c.optimizer.epochs;
  t.batch_size = c.optimizer.batch_size;
  t.lr0 = c.optimizer.lr0;
  t.momentum = c.optimizer.momentum;
  t.encoding = c.encoding;
  t.seed = seed;
  Trainer trainer(net, t);
  RunResult r;
  r.variant = v;
  r.seed = seed;
  r.record.variant = to_string(v);
  r.record.seed = seed;
  for (std::size_t e = 0; e < t.epochs; ++e) {
    r.record.epochs.push_back(trainer.train_epoch(data.train, &data.test));
    const auto& rec = r.record.epochs.back();
    if (log) {
      char line[200];
      std::snprintf(line, sizeof line, "[%s seed %llu] epoch %zu/%zu loss %.4f train %.3f test %.3f flip %.5f (%.1fs)",
                    to_string(v).c_str(), static_cast<unsigned long long>(seed), rec.epoch, t.epochs, rec.loss,
                    rec.train_acc, rec.test_acc, rec.flip_ratio, rec.seconds);
      *log << line << '\n' << std::flush;
    }
  }
  if (c.telemetry.checkpoints) {
    r.checkpoint = out_dir / (to_string(v) + "_seed" + std::to_string(seed) + ".ckpt");
    save_checkpoint(net, r.checkpoint.string());
  }
  return r;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace

std::string telemetry_header(std::size_t timesteps, bool with_gates) {
  std::string h = "epoch,variant,seed,train_acc,test_acc,loss,flip_ratio,grad_mean,grad_var,lr";
  if (with_gates)
    for (std::size_t t = 1; t <= timesteps; ++t) h += ",gate_t" + std::to_string(t);
  return h;
}

void write_telemetry_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs, std::size_t timesteps) {
  bool gates = false;
  for (const auto& r : runs) gates = gates || r.variant == Variant::binary_agmm;
  auto out = open_out(path);
  out << telemetry_header(timesteps, gates) << '\n';
  for (const auto& r : runs)
    for (const auto& e : r.record.epochs) {
      out << e.epoch << ',' << to_string(r.variant) << ',' << r.seed << ',' << format_number(e.train_acc) << ','
          << format_number(e.test_acc) << ',' << format_number(e.loss) << ',' << format_number(e.flip_ratio) << ','
          << format_number(e.grad_mean) << ',' << format_number(e.grad_var) << ',' << format_number(e.lr);
      if (gates)
        for (std::size_t t = 0; t < timesteps; ++t)
          out << ',' << (t < e.gate_means.size() ? format_number(e.gate_means[t]) : "");
      out << '\n';
    }
  close_out(out, path);
}

void write_gate_stats_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs, bool approximate) {
  auto out = open_out(path);
  out << "variant,seed,epoch,layer,timestep,gate_mean,mean_before,var_before,mean_after,var_after,approx_backward\n";
  for (const auto& r : runs)
    for (const auto& e : r.record.epochs)
      for (const auto& g : e.gate_cells)
        out << to_string(r.variant) << ',' << r.seed << ',' << e.epoch << ',' << g.layer << ',' << g.timestep + 1 << ','
            << format_number(g.gate_mean) << ',' << format_number(g.mean_before) << ','
            << format_number(g.var_before) << ',' << format_number(g.mean_after) << ','
            << format_number(g.var_after) << ',' << (approximate ? 1 : 0) << '\n';
  close_out(out, path);
}

void write_profile_csv(const std::filesystem::path& path, const ProfileReport& r) {
  auto out = open_out(path);
  out << "layer,type,firing_rate,sops,macs,param_bits\n";
  for (const auto& l : r.layers)
    out << l.layer << ',' << l.type << ',' << (l.has_rate ? format_number(l.firing_rate) : "") << ','
        << format_number(l.sops) << ',' << format_number(l.macs) << ',' << l.param_bits << '\n';
  close_out(out, path);
}

// ---------------------------------------------------------------------------
// Ordering summary

std::pair<double, double> decile_means(const std::vector<double>& s) {
  if (s.empty()) return {0.0, 0.0};
  const std::size_t k = std::max<std::size_t>(1, (s.size() + 9) / 10);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    first += s[i];
    last += s[s.size() - k + i];
  }
  return {first / static_cast<double>(k), last / static_cast<double>(k)};
}

OrderingSummary summarize_ordering(const std::vector<RunResult>& runs) {
  OrderingSummary s;
  std::map<std::uint64_t, OrderingSummary::SeedRow> rows;
  for (const auto& r : runs) {
    auto& row = rows[r.seed];
    row.seed = r.seed;
    std::vector<double> flips;
    for (const auto& e : r.record.epochs) flips.push_back(e.flip_ratio);
    double mean = 0.0;
    for (double f : flips) mean += f;
    mean /= static_cast<double>(std::max<std::size_t>(1, flips.size()));
    const auto [first, last] = decile_means(flips);
    row.mean_flip[r.variant] = mean;
    row.first_decile[r.variant] = first;
    row.last_decile[r.variant] = last;
    row.final_test_acc[r.variant] = r.record.epochs.empty() ? 0.0 : r.record.epochs.back().test_acc;
    if (r.variant == Variant::fp) s.has_fp = true;
    if (r.variant == Variant::binary) s.has_binary = true;
    if (r.variant == Variant::binary_agmm) s.has_agmm = true;
  }
  std::size_t paired = 0;
  for (auto& [seed, row] : rows) {
    const bool b = row.mean_flip.count(Variant::binary) > 0;
    if (b && row.mean_flip.count(Variant::fp))
      s.fp_below_binary = s.fp_below_binary && row.mean_flip[Variant::fp] < row.mean_flip[Variant::binary];
    if (b && row.mean_flip.count(Variant::binary_agmm)) {
      s.agmm_below_binary = s.agmm_below_binary && row.mean_flip[Variant::binary_agmm] < row.mean_flip[Variant::binary];
      const double gain = row.final_test_acc[Variant::binary_agmm] - row.final_test_acc[Variant::binary];
      s.mean_acc_gain += gain;
      if (gain >= 0.0) ++s.agmm_acc_wins;
      ++paired;
    }
    for (const auto& [v, first] : row.first_decile) {
      const bool down = row.last_decile[v] < first;
      auto it = s.downward_trend.find(v);
      s.downward_trend[v] = (it == s.downward_trend.end() ? true : it->second) && down;
    }
    s.seeds.push_back(row);
  }
  if (paired > 0) {
    s.mean_acc_gain /= static_cast<double>(paired);
    s.accuracy_pass = s.agmm_acc_wins == paired && s.mean_acc_gain > 0.0;
  }
  return s;
}

bool OrderingSummary::pass() const {
  bool ok = accuracy_pass;
  if (has_fp && has_binary) ok = ok && fp_below_binary;
  if (has_agmm && has_binary) ok = ok && agmm_below_binary;
  for (const auto& [v, down] : downward_trend) ok = ok && down;
  return ok;
}

std::string ordering_to_json(const OrderingSummary& s) {
  nlohmann::ordered_json j;
  j["csv_schema_version"] = kCsvSchemaVersion;
  auto& seeds = j["seeds"] = nlohmann::ordered_json::array();
  for (const auto& row : s.seeds) {
    nlohmann::ordered_json r;
    r["seed"] = row.seed;
    for (const auto& [v, m] : row.mean_flip) {
      const auto name = to_string(v);
      r[name] = {{"mean_flip", m},
                 {"first_decile_flip", row.first_decile.at(v)},
                 {"last_decile_flip", row.last_decile.at(v)},
                 {"final_test_acc", row.final_test_acc.at(v)}};
    }
    seeds.push_back(r);
  }
  auto& checks = j["checks"];
  if (s.has_fp && s.has_binary) checks["flip_fp_below_binary_every_seed"] = s.fp_below_binary;
  if (s.has_agmm && s.has_binary) {
    checks["flip_agmm_below_binary_every_seed"] = s.agmm_below_binary;
    checks["acc_agmm_ge_binary_seeds"] = s.agmm_acc_wins;
    checks["acc_mean_gain"] = s.mean_acc_gain;
    checks["acc_pass"] = s.accuracy_pass;
  }
  for (const auto& [v, down] : s.downward_trend) checks["flip_trend_down_" + to_string(v)] = down;
  j["pass"] = s.pass();
  return j.dump(2) + "\n";
}

std::uint64_t checkpoint_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  unsigned char h[16];
  if (!in.read(reinterpret_cast<char*>(h), sizeof h)) throw IoError(path, "truncated checkpoint header");
  if (std::string(reinterpret_cast<char*>(h), 4) != std::string(kCheckpointMagic, 4))
    throw IoError(path, "not a BSNN checkpoint");
  std::uint64_t d = 0;
  for (int i = 0; i < 8; ++i) d |= static_cast<std::uint64_t>(h[8 + i]) << (8 * i);
  return d;
}

}  // namespace bsnn::app
