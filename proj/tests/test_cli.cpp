#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bsnn/error.hpp"
#include "bsnn/flip.hpp"
#include "doctest.h"
#include "experiment.hpp"
#include "helpers.hpp"

using namespace bsnn;
using namespace bsnn::app;
namespace fs = std::filesystem;

namespace {

const char* kSmoke = R"({
  // one epoch on a handful of blobs
  "dataset": {"synthetic": {"per_class": 4, "height": 8, "width": 8}, "test_per_class": 2},
  "network": {"width": 4, "blocks": 1},
  "optimizer": {"epochs": 1, "batch_size": 8},
  "seeds": [3]
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = testing::temp_path(name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BSNN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

RunResult fake_run(Variant v, std::uint64_t seed, std::vector<double> flips, double acc) {
  RunResult r;
  r.variant = v;
  r.seed = seed;
  for (std::size_t e = 0; e < flips.size(); ++e) {
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.flip_ratio = flips[e];
    rec.test_acc = acc;
    r.record.epochs.push_back(rec);
  }
  return r;
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides and round trip") {
  const ExperimentConfig d = parse_config("{}");
  CHECK(d.optimizer.epochs == 60);
  CHECK(d.network.timesteps == 2);
  CHECK(d.seeds == std::vector<std::uint64_t>{1, 2, 3});

  const ExperimentConfig c = parse_config(kSmoke);
  CHECK(c.optimizer.epochs == 1);
  CHECK(c.dataset.blobs.per_class == 4);
  CHECK(c.seeds == std::vector<std::uint64_t>{3});
  const ExperimentConfig back = parse_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("config errors name the key and line") {
  const auto unknown = config_error("{\n  \"network\": {\n    \"widht\": 3\n  }\n}\n");
  CHECK(unknown.find("cfg.json:3") != std::string::npos);
  CHECK(unknown.find("network.widht") != std::string::npos);

  const auto type = config_error("{\n\"optimizer\": {\"epochs\": \"many\"}\n}");
  CHECK(type.find("cfg.json:2") != std::string::npos);
  CHECK(type.find("optimizer.epochs") != std::string::npos);

  CHECK(config_error("{\n\"seeds\": [1,\n").find("cfg.json:") != std::string::npos);
  CHECK_FALSE(config_error(R"({"variant": "ternary"})").empty());
  CHECK_FALSE(config_error(R"({"optimizer": {"epochs": 0}})").empty());
}

TEST_CASE("output directory override from the environment") {
  ExperimentConfig c;
  c.output_dir = "from_config";
  ::unsetenv("BSNN_OUT_DIR");
  CHECK(resolve_output_dir(c) == fs::path("from_config"));
  ::setenv("BSNN_OUT_DIR", "from_env", 1);
  CHECK(resolve_output_dir(c) == fs::path("from_env"));
  ::unsetenv("BSNN_OUT_DIR");
}

TEST_CASE("telemetry header is the versioned schema") {
  CHECK(telemetry_header(2, false) == "epoch,variant,seed,train_acc,test_acc,loss,flip_ratio,grad_mean,grad_var,lr");
  CHECK(telemetry_header(2, true) ==
        "epoch,variant,seed,train_acc,test_acc,loss,flip_ratio,grad_mean,grad_var,lr,gate_t1,gate_t2");
}

TEST_CASE("decile means and ordering summary") {
  std::vector<double> s;
  for (int i = 1; i <= 20; ++i) s.push_back(i);
  CHECK(decile_means(s) == std::pair<double, double>{1.5, 19.5});
  CHECK(decile_means({4.0, 8.0, 6.0}) == std::pair<double, double>{4.0, 6.0});

  std::vector<RunResult> runs{fake_run(Variant::fp, 1, {0.3, 0.1, 0.0}, 0.9),
                              fake_run(Variant::binary, 1, {0.4, 0.3, 0.2}, 0.8),
                              fake_run(Variant::binary_agmm, 1, {0.35, 0.2, 0.1}, 0.85)};
  OrderingSummary ok = summarize_ordering(runs);
  CHECK(ok.pass());
  CHECK(ok.mean_acc_gain == doctest::Approx(0.05));

  runs[2] = fake_run(Variant::binary_agmm, 1, {0.1, 0.2, 0.3}, 0.85);  // rising flips
  OrderingSummary rising = summarize_ordering(runs);
  CHECK_FALSE(rising.downward_trend.at(Variant::binary_agmm));
  CHECK_FALSE(rising.pass());

  runs[2] = fake_run(Variant::binary_agmm, 1, {0.35, 0.2, 0.1}, 0.7);  // lower accuracy
  CHECK_FALSE(summarize_ordering(runs).accuracy_pass);
  CHECK(ordering_to_json(summarize_ordering(runs)).find("\"pass\": false") != std::string::npos);
}

TEST_CASE("flip grid: symmetric point, checks and CSV") {
  FlipGridSection g;
  g.samples = 20000;
  const FlipGridReport r = run_flip_grid(g);
  CHECK(r.rows.size() == 125);
  for (const auto& row : r.rows)
    if (row.mu == 0.0 && row.ratio == 0.0) CHECK(row.analytic == 0.5);
  CHECK(r.monotone_pass());
  CHECK(r.gate_pass());
  CHECK(r.cdf.pass);

  const fs::path csv = testing::temp_path("grid.csv");
  write_flip_grid_csv(csv, r);
  const CsvTable t = read_csv(csv);
  CHECK(t.header.size() == 8);
  CHECK(t.rows.size() == 125);
  CHECK(t.column("mc_estimate") == 4);
  CHECK_THROWS_AS(t.column("nope"), ConfigError);
  fs::remove(csv);

  FlipGridSection bad = g;
  bad.mus = {0.0, 0.5};
  bad.sigmas = {1.0};
  bad.ratios = {0.25};  // only mu = 0 is in regime and one sigma: nothing to compare
  CHECK_FALSE(grid_monotonicity(bad).pass);
}

TEST_CASE("SVG rendering") {
  CsvTable two{{"x", "y"}, {{"0", "1"}, {"1", "3"}, {"2", "2"}}};
  PlotSpec s;
  s.x = "x";
  s.y = {"y"};
  s.title = "a < b & c";
  const std::string svg = render_svg(two, s);
  CHECK(count(svg, "<polyline") == 1);
  CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
  CHECK(svg.rfind("</svg>\n") == svg.size() - 7);

  CsvTable grouped{{"epoch", "variant", "flip_ratio"},
                   {{"1", "fp", "0.1"}, {"2", "fp", "0.05"}, {"1", "binary", "0.2"}, {"2", "binary", "0.1"},
                    {"1", "binary-agmm", "0.15"}, {"2", "binary-agmm", "0.08"}}};
  PlotSpec g;
  g.group = "variant";
  CHECK(count(render_svg(grouped, g), "<polyline") == 3);

  PlotSpec missing = g;
  missing.y = {"flip_ratio", "gate_t9"};
  try {
    render_svg(grouped, missing);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("gate_t9") != std::string::npos);
  }
  CHECK_THROWS_AS(render_svg(CsvTable{{"epoch", "flip_ratio"}, {}}, PlotSpec{}), ConfigError);
}

TEST_CASE("cli train: one row, gate columns, byte-identical rerun") {
  const fs::path dir = fresh_dir("cli_train");
  spit(dir / "smoke.json", kSmoke);
  const std::string cfg = (dir / "smoke.json").string();
  REQUIRE(run_cli("train -c " + cfg + " -o " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("train -c " + cfg + " -o " + (dir / "b").string()) == 0);
  const CsvTable t = read_csv(dir / "a" / "telemetry.csv");
  CHECK(t.rows.size() == 1);
  CHECK(t.header.back() == "gate_t2");
  for (const auto* f : {"telemetry.csv", "gate_stats.csv", "manifest.json", "binary-agmm_seed3.ckpt"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  REQUIRE(run_cli("train -c " + cfg + " --variant fp -o " + (dir / "fp").string()) == 0);
  CHECK(read_csv(dir / "fp" / "telemetry.csv").header.back() == "lr");
  CHECK_FALSE(fs::exists(dir / "fp" / "gate_stats.csv"));

  // The checkpoint header carries the config digest (seed excluded).
  const auto net = make_network_config(parse_config(kSmoke), Variant::binary_agmm, 99, {1, 8, 8}, 10);
  CHECK(checkpoint_digest((dir / "a" / "binary-agmm_seed3.ckpt").string()) == net.digest());

  REQUIRE(run_cli("profile -c " + cfg + " -o " + (dir / "a").string() + " --checkpoint " +
                  (dir / "a" / "binary-agmm_seed3.ckpt").string() + " --checkpoint " +
                  (dir / "fp" / "fp_seed3.ckpt").string()) == 0);
  CHECK(read_csv(dir / "a" / "profile_binary-agmm.csv").header ==
        std::vector<std::string>{"layer", "type", "firing_rate", "sops", "macs", "param_bits"});
  CHECK(fs::exists(dir / "a" / "profile_fp.csv"));
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = fresh_dir("cli_codes");
  spit(dir / "bad.json", "{\"network\": {\"widht\": 3}}");
  CHECK(run_cli("train -c " + (dir / "bad.json").string()) == kExitUsage);
  CHECK(run_cli("train -c " + (dir / "missing.json").string()) == kExitIo);
  CHECK(run_cli("no-such-command") == kExitUsage);
  CHECK(run_cli("gradcheck --mutate-conv-backward") == kExitCheckFailed);
  CHECK(run_cli("gradcheck") == kExitOk);

  spit(dir / "empty.csv", "epoch,flip_ratio\n");
  CHECK(run_cli("plot " + (dir / "empty.csv").string() + " -o " + (dir / "empty.svg").string()) == kExitUsage);
  CHECK_FALSE(fs::exists(dir / "empty.svg"));
  CHECK(run_cli("plot " + (dir / "missing.csv").string()) == kExitIo);

  spit(dir / "other.json", "{\"network\": {\"width\": 5, \"blocks\": 1}}");
  spit(dir / "smoke.json", kSmoke);
  REQUIRE(run_cli("train -c " + (dir / "smoke.json").string() + " -o " + dir.string()) == 0);
  // Same file, different architecture: rejected by digest.
  CHECK(run_cli("profile -c " + (dir / "other.json").string() + " -o " + dir.string() + " --checkpoint " +
                (dir / "binary-agmm_seed3.ckpt").string()) == kExitUsage);
  fs::remove_all(dir);
}
