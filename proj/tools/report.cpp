#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bsnn/error.hpp"
#include "bsnn/flip.hpp"
#include "bsnn/verify/series.hpp"
#include "experiment.hpp"

namespace bsnn::app {

// ---------------------------------------------------------------------------
// Flip-probability grid

MonotonicityReport grid_monotonicity(const FlipGridSection& g) {
  MonotonicityReport total;
  std::vector<double> mus = g.mus, sigmas = g.sigmas;
  std::sort(mus.begin(), mus.end());
  std::sort(sigmas.begin(), sigmas.end());
  for (double r : g.ratios) {
    if (r < 0.0) continue;  // the negative-weight branch decreases in mu
    std::vector<double> sub;
    for (double m : mus)
      if (m < r) sub.push_back(m);
    if (sub.empty()) continue;
    auto rep = monotonicity_check(sub, sigmas, r, true);
    total.pass = total.pass && rep.pass;
    total.comparisons += rep.comparisons;
    total.strict += rep.strict;
    for (auto& v : rep.violations) total.violations.push_back("ratio " + format_number(r) + ": " + v);
  }
  if (total.comparisons == 0) total.pass = false;
  return total;
}

std::pair<std::size_t, std::size_t> gate_effect(const FlipGridSection& g) {
  std::size_t points = 0, decreases = 0;
  for (double r : g.ratios)
    for (double mu : g.mus) {
      if (!(r > mu && mu >= 0.0)) continue;
      for (double sigma : g.sigmas)
        for (double gate : g.gates) {
          ++points;
          const double base = flip_probability_analytic({r * g.eta, g.eta, mu, sigma});
          const double scaled = flip_probability_analytic({r * g.eta, g.eta, gate * mu, gate * sigma});
          if (scaled < base) ++decreases;
        }
    }
  return {points, decreases};
}

FlipGridReport run_flip_grid(const FlipGridSection& g, bool monte_carlo) {
  FlipGridReport rep;
  std::uint64_t seed = g.seed;
  for (double mu : g.mus)
    for (double sigma : g.sigmas)
      for (double r : g.ratios) {
        FlipGridRow row;
        row.mu = mu;
        row.sigma = sigma;
        row.ratio = r;
        const FlipModelInput in{r * g.eta, g.eta, mu, sigma};
        row.analytic = flip_probability_analytic(in);
        if (monte_carlo) {
          const auto mc = flip_probability_montecarlo(in, g.samples, seed++);
          row.estimate = mc.estimate;
          row.stderr_hat = mc.standard_error;
          // An all-or-nothing sample has SE 0; fall back to the standard error implied by the analytic P.
          const double se_null = std::sqrt(row.analytic * (1.0 - row.analytic) / static_cast<double>(g.samples));
          row.tolerance = 3.0 * std::max(mc.standard_error, se_null);
          row.within = std::fabs(mc.estimate - row.analytic) <= row.tolerance;
          if (row.within) ++rep.within;
        }
        rep.rows.push_back(row);
      }
  rep.cdf = verify::check_normal_cdf();
  rep.monotone = grid_monotonicity(g);
  std::tie(rep.gate_points, rep.gate_decreases) = gate_effect(g);
  return rep;
}

void write_flip_grid_csv(const std::filesystem::path& path, const FlipGridReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << "mu,sigma,omega_over_eta,analytic,mc_estimate,stderr,tolerance,within_3se\n";
  for (const auto& row : r.rows)
    out << format_number(row.mu) << ',' << format_number(row.sigma) << ',' << format_number(row.ratio) << ','
        << format_number(row.analytic) << ',' << format_number(row.estimate) << ',' << format_number(row.stderr_hat)
        << ',' << format_number(row.tolerance) << ',' << (row.within ? 1 : 0) << '\n';
  out.close();
  if (!out) throw IoError(path.string(), "write failed");
}

// ---------------------------------------------------------------------------
// CSV input

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open CSV");
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split_line(line);
      first = false;
    } else {
      t.rows.push_back(split_line(line));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// SVG charts

namespace {

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  return o;
}

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

std::string tick_label(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

bool parse_cell(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0' && std::isfinite(out);
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

}  // namespace

std::string render_svg(const CsvTable& table, const PlotSpec& spec) {
  std::vector<std::string> missing;
  auto has = [&](const std::string& c) { return std::find(table.header.begin(), table.header.end(), c) != table.header.end(); };
  if (!has(spec.x)) missing.push_back(spec.x);
  for (const auto& y : spec.y)
    if (!has(y)) missing.push_back(y);
  if (!spec.group.empty() && !has(spec.group)) missing.push_back(spec.group);
  if (!missing.empty()) {
    std::string m;
    for (const auto& c : missing) m += (m.empty() ? "" : ", ") + c;
    throw ConfigError("CSV is missing column(s): " + m);
  }
  if (table.rows.empty()) throw ConfigError("CSV has no data rows; nothing to plot");
  if (spec.y.empty()) throw ConfigError("no y columns requested");

  const std::size_t xi = table.column(spec.x);
  const std::size_t gi = spec.group.empty() ? 0 : table.column(spec.group);
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  for (const auto& y : spec.y) {
    const std::size_t yi = table.column(y);
    for (const auto& row : table.rows) {
      std::string key = spec.group.empty() ? y : row.size() > gi ? row[gi] : "";
      if (!spec.group.empty() && spec.y.size() > 1) key += " " + y;
      double xv = 0.0, yv = 0.0;
      if (row.size() <= std::max(xi, yi) || !parse_cell(row[xi], xv) || !parse_cell(row[yi], yv)) continue;
      auto [it, fresh] = index.emplace(key, series.size());
      if (fresh) series.push_back({key, {}});
      series[it->second].points.emplace_back(xv, yv);
    }
  }
  if (series.empty()) throw ConfigError("no numeric values in the requested columns");

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double W = 760, H = 440, L = 80, R = 190, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return T + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  if (!spec.title.empty())
    o << "<text x=\"" << num(L + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(spec.title)
      << "</text>\n";
  o << "<g stroke=\"#333\" stroke-width=\"1\">\n"
    << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph << "\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\"/>\n</g>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    o << "<line x1=\"" << num(sx(xv)) << "\" y1=\"" << T + ph << "\" x2=\"" << num(sx(xv)) << "\" y2=\"" << T + ph + 5
      << "\" stroke=\"#333\"/>\n"
      << "<text x=\"" << num(sx(xv)) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">" << tick_label(xv)
      << "</text>\n"
      << "<line x1=\"" << L - 5 << "\" y1=\"" << num(sy(yv)) << "\" x2=\"" << L + pw << "\" y2=\"" << num(sy(yv))
      << "\" stroke=\"#ddd\"/>\n"
      << "<text x=\"" << L - 8 << "\" y=\"" << num(sy(yv) + 4) << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
  }
  std::string ylabel;
  for (const auto& y : spec.y) ylabel += (ylabel.empty() ? "" : ", ") + y;
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xml_escape(spec.x)
    << "</text>\n"
    << "<text x=\"18\" y=\"" << num(T + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << num(T + ph / 2)
    << ")\">" << xml_escape(ylabel) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % 8];
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t p = 0; p < series[i].points.size(); ++p)
      o << (p ? " " : "") << num(sx(series[i].points[p].first)) << ',' << num(sy(series[i].points[p].second));
    o << "\"/>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << L + pw + 15 << "\" y1=\"" << num(ly) << "\" x2=\"" << L + pw + 40 << "\" y2=\"" << num(ly)
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << L + pw + 46 << "\" y=\"" << num(ly + 4) << "\">" << xml_escape(series[i].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace bsnn::app
