#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "bsnn/error.hpp"
#include "experiment.hpp"
#include "json.hpp"

namespace bsnn::app {

using nlohmann::json;

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Finds `"key"` followed by a colon, walking the path one key at a time. Good
// enough for error messages; JSON objects carry no source positions.
std::size_t line_of_key(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const auto& key : path) {
    const std::string quoted = "\"" + key + "\"";
    std::size_t hit = std::string::npos;
    for (std::size_t p = text.find(quoted, pos); p != std::string::npos; p = text.find(quoted, p + 1)) {
      std::size_t q = p + quoted.size();
      while (q < text.size() && std::isspace(static_cast<unsigned char>(text[q]))) ++q;
      if (q < text.size() && text[q] == ':') {
        hit = p;
        break;
      }
    }
    if (hit == std::string::npos) return 0;
    pos = hit + quoted.size();
  }
  return line_of_offset(text, pos);
}

std::string dotted(const std::vector<std::string>& path) {
  std::string s;
  for (const auto& p : path) s += (s.empty() ? "" : ".") + p;
  return s;
}

class Section {
 public:
  Section(const json& j, std::vector<std::string> path, const std::string& text, const std::string& origin)
      : j_(j), path_(std::move(path)), text_(text), origin_(origin) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] void fail(const std::vector<std::string>& at, const std::string& what) const {
    const std::size_t line = at.empty() ? 1 : line_of_key(text_, at);
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": '" + (at.empty() ? "<root>" : dotted(at)) + "' " + what);
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::vector<std::string> at(const std::string& key) const {
    auto p = path_;
    p.push_back(key);
    return p;
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(at(key), "must be true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(at(key), "must be a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(at(key), "must be a nonnegative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, std::uint64_t& out, int) {
    std::size_t tmp = out;
    get(key, tmp);
    out = tmp;
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(at(key), "must be a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(at(key), "must be an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(at(key), "must be an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }

  template <typename Fn>
  void section(const std::string& key, Fn&& fn) {
    if (const json* v = find(key)) {
      Section s(*v, at(key), text_, origin_);
      fn(s);
      s.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "is not a recognised key");
  }

 private:
  const json& j_;
  std::vector<std::string> path_;
  const std::string& text_;
  const std::string& origin_;
  std::set<std::string> seen_;
};

Variant variant_at(Section& s, const std::string& key, const std::string& text) {
  try {
    return parse_variant(text);
  } catch (const ConfigError&) {
    s.fail(s.at(key), "has unknown variant '" + text + "' (expected fp, binary or binary-agmm)");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid configuration: " + what);
  };
  need(dataset.source == "synthetic" || dataset.source == "idx", "dataset.source must be synthetic or idx");
  if (dataset.source == "idx")
    need(!dataset.train_images.empty() && !dataset.train_labels.empty() && !dataset.test_images.empty() &&
             !dataset.test_labels.empty(),
         "idx datasets need train_images, train_labels, test_images and test_labels");
  need(dataset.blobs.classes >= 2, "dataset.synthetic.classes must be at least 2");
  need(dataset.blobs.per_class >= 1 && dataset.test_per_class >= 1, "per-class sample counts must be positive");
  need(dataset.blobs.noise >= 0.0, "dataset.synthetic.noise must be nonnegative");
  need(network.width >= 1 && network.timesteps >= 1, "network.width and network.timesteps must be positive");
  need(network.alpha_init == network.alpha_init, "network.alpha_init must be a number");
  try {
    network.lif.validate();
  } catch (const DomainError& e) {
    need(false, std::string("network: ") + e.what());
  }
  need(optimizer.epochs >= 1 && optimizer.batch_size >= 2, "optimizer.epochs >= 1 and optimizer.batch_size >= 2");
  need(optimizer.lr0 > 0.0, "optimizer.lr0 must be positive");
  need(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum must be in [0, 1)");
  need(energy.energy_per_accumulate_pj > 0.0 && energy.energy_per_mac_pj > 0.0, "energy constants must be positive");
  need(!seeds.empty(), "seeds must not be empty");
  need(!variants.empty(), "variants must not be empty");
  need(!flipprob.mus.empty() && !flipprob.sigmas.empty() && !flipprob.ratios.empty(), "flipprob grid axes must not be empty");
  for (double s : flipprob.sigmas) need(s > 0.0, "flipprob.sigmas must be positive");
  for (double g : flipprob.gates) need(g > 0.0 && g < 1.0, "flipprob.gates must lie in (0, 1)");
  need(flipprob.eta > 0.0, "flipprob.eta must be positive");
  need(flipprob.samples >= kMinMonteCarloSamples, "flipprob.samples must be at least 10000");
  need(!output_dir.empty(), "output_dir must not be empty");
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" + std::to_string(line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0)) +
                      ": syntax error: " + e.what());
  }
  ExperimentConfig c;
  Section s(root, {}, text, origin);
  s.get("output_dir", c.output_dir);
  std::string variant = to_string(c.variant);
  s.get("variant", variant);
  c.variant = variant_at(s, "variant", variant);
  if (const json* v = s.find("variants")) {
    if (!v->is_array() || v->empty()) s.fail(s.at("variants"), "must be a non-empty array of variant names");
    c.variants.clear();
    for (const auto& e : *v) {
      if (!e.is_string()) s.fail(s.at("variants"), "must be a non-empty array of variant names");
      c.variants.push_back(variant_at(s, "variants", e.get<std::string>()));
    }
  }
  if (const json* v = s.find("seeds")) {
    if (!v->is_array() || v->empty()) s.fail(s.at("seeds"), "must be a non-empty array of nonnegative integers");
    c.seeds.clear();
    for (const auto& e : *v) {
      if (!e.is_number_unsigned()) s.fail(s.at("seeds"), "must be a non-empty array of nonnegative integers");
      c.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  std::string encoding = c.encoding == InputEncoding::constant ? "constant" : "bernoulli";
  s.get("encoding", encoding);
  if (encoding != "constant" && encoding != "bernoulli") s.fail(s.at("encoding"), "must be constant or bernoulli");
  c.encoding = encoding == "constant" ? InputEncoding::constant : InputEncoding::bernoulli;

  s.section("dataset", [&](Section& d) {
    d.get("source", c.dataset.source);
    d.get("train_images", c.dataset.train_images);
    d.get("train_labels", c.dataset.train_labels);
    d.get("test_images", c.dataset.test_images);
    d.get("test_labels", c.dataset.test_labels);
    d.get("train_limit", c.dataset.train_limit);
    d.get("test_limit", c.dataset.test_limit);
    d.get("test_per_class", c.dataset.test_per_class);
    d.section("synthetic", [&](Section& b) {
      b.get("seed", c.dataset.blobs.seed, 0);
      b.get("classes", c.dataset.blobs.classes);
      b.get("per_class", c.dataset.blobs.per_class);
      b.get("channels", c.dataset.blobs.image[0]);
      b.get("height", c.dataset.blobs.image[1]);
      b.get("width", c.dataset.blobs.image[2]);
      b.get("noise", c.dataset.blobs.noise);
    });
  });
  s.section("network", [&](Section& n) {
    n.get("width", c.network.width);
    n.get("blocks", c.network.blocks);
    n.get("skip", c.network.skip);
    n.get("downsample", c.network.downsample);
    n.get("timesteps", c.network.timesteps);
    n.get("tau", c.network.lif.tau);
    n.get("v_th", c.network.lif.v_th);
    n.get("beta", c.network.lif.beta);
    n.get("detach_reset", c.network.lif.detach_reset);
    std::string mode = c.network.agmm_backward == AgmmBackward::exact ? "exact" : "approximate";
    n.get("agmm_backward", mode);
    if (mode != "exact" && mode != "approximate") n.fail(n.at("agmm_backward"), "must be exact or approximate");
    c.network.agmm_backward = mode == "exact" ? AgmmBackward::exact : AgmmBackward::approximate;
    n.get("agmm_per_sample", c.network.agmm_per_sample);
    n.get("alpha_init", c.network.alpha_init);
    n.get("clamp_latent", c.network.clamp_latent);
  });
  s.section("optimizer", [&](Section& o) {
    o.get("epochs", c.optimizer.epochs);
    o.get("batch_size", c.optimizer.batch_size);
    o.get("lr0", c.optimizer.lr0);
    o.get("momentum", c.optimizer.momentum);
  });
  s.section("telemetry", [&](Section& t) {
    t.get("gate_stats", c.telemetry.gate_stats);
    t.get("checkpoints", c.telemetry.checkpoints);
  });
  s.section("energy", [&](Section& e) {
    e.get("accumulate_pj", c.energy.energy_per_accumulate_pj);
    e.get("mac_pj", c.energy.energy_per_mac_pj);
  });
  s.section("flipprob", [&](Section& f) {
    f.get("mus", c.flipprob.mus);
    f.get("sigmas", c.flipprob.sigmas);
    f.get("ratios", c.flipprob.ratios);
    f.get("eta", c.flipprob.eta);
    f.get("samples", c.flipprob.samples);
    f.get("seed", c.flipprob.seed, 0);
    f.get("gates", c.flipprob.gates);
  });
  s.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open configuration file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["output_dir"] = c.output_dir;
  j["variant"] = to_string(c.variant);
  j["variants"] = json::array();
  for (Variant v : c.variants) j["variants"].push_back(to_string(v));
  j["seeds"] = c.seeds;
  j["encoding"] = c.encoding == InputEncoding::constant ? "constant" : "bernoulli";
  const auto& d = c.dataset;
  j["dataset"] = {{"source", d.source},
                  {"train_images", d.train_images},
                  {"train_labels", d.train_labels},
                  {"test_images", d.test_images},
                  {"test_labels", d.test_labels},
                  {"train_limit", d.train_limit},
                  {"test_limit", d.test_limit},
                  {"test_per_class", d.test_per_class},
                  {"synthetic",
                   {{"seed", d.blobs.seed},
                    {"classes", d.blobs.classes},
                    {"per_class", d.blobs.per_class},
                    {"channels", d.blobs.image[0]},
                    {"height", d.blobs.image[1]},
                    {"width", d.blobs.image[2]},
                    {"noise", d.blobs.noise}}}};
  const auto& n = c.network;
  j["network"] = {{"width", n.width},
                  {"blocks", n.blocks},
                  {"skip", n.skip},
                  {"downsample", n.downsample},
                  {"timesteps", n.timesteps},
                  {"tau", n.lif.tau},
                  {"v_th", n.lif.v_th},
                  {"beta", n.lif.beta},
                  {"detach_reset", n.lif.detach_reset},
                  {"agmm_backward", n.agmm_backward == AgmmBackward::exact ? "exact" : "approximate"},
                  {"agmm_per_sample", n.agmm_per_sample},
                  {"alpha_init", n.alpha_init},
                  {"clamp_latent", n.clamp_latent}};
  j["optimizer"] = {{"epochs", c.optimizer.epochs},
                    {"batch_size", c.optimizer.batch_size},
                    {"lr0", c.optimizer.lr0},
                    {"momentum", c.optimizer.momentum}};
  j["telemetry"] = {{"gate_stats", c.telemetry.gate_stats}, {"checkpoints", c.telemetry.checkpoints}};
  j["energy"] = {{"accumulate_pj", c.energy.energy_per_accumulate_pj}, {"mac_pj", c.energy.energy_per_mac_pj}};
  const auto& f = c.flipprob;
  j["flipprob"] = {{"mus", f.mus},       {"sigmas", f.sigmas},   {"ratios", f.ratios}, {"eta", f.eta},
                   {"samples", f.samples}, {"seed", f.seed}, {"gates", f.gates}};
  return j.dump(2) + "\n";
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& c) {
  const char* env = std::getenv("BSNN_OUT_DIR");
  if (env && *env) return env;
  return c.output_dir;
}

}  // namespace bsnn::app
