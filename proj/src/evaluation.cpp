#include "heatcorr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

#include "heatcorr/geodesic.hpp"

namespace heatcorr {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path.string());
  return os;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Vector threshold_grid(double lo, double hi, int intervals) {
  if (intervals < 1 || !(hi > lo)) throw Error(ErrorCategory::usage, "threshold grid needs hi > lo and >= 1 interval");
  Vector g(intervals + 1);
  for (int i = 0; i <= intervals; ++i) g(i) = lo + (hi - lo) * i / intervals;
  return g;
}

Vector match_errors(const PointMap& map, const std::vector<Index>& ground_truth, const TriMesh& target,
                    unsigned threads) {
  if (ground_truth.size() != map.matches.size()) {
    throw Error(ErrorCategory::validation, "ground truth has " + std::to_string(ground_truth.size()) +
                                               " entries for " + std::to_string(map.matches.size()) +
                                               " source vertices");
  }
  const Index nt = target.n_vertices();
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (ground_truth[i] < 0 || ground_truth[i] >= nt) {
      throw Error(ErrorCategory::validation, "ground-truth index " + std::to_string(ground_truth[i]) +
                                                 " (source vertex " + std::to_string(i) + ") out of range");
    }
    if (map.matches[i] < 0 || map.matches[i] >= nt) {
      throw Error(ErrorCategory::validation, "predicted match out of range");
    }
  }
  std::vector<Index> sources(ground_truth);
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
  const Matrix rows = geodesic_rows(target, sources, threads);
  std::map<Index, Index> row_of;
  for (std::size_t r = 0; r < sources.size(); ++r) row_of[sources[r]] = static_cast<Index>(r);

  const double scale = 1.0 / std::sqrt(compute_metrics(target).total_area);
  Vector errors(static_cast<Index>(ground_truth.size()));
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    errors(static_cast<Index>(i)) = rows(row_of[ground_truth[i]], map.matches[i]) * scale;
  }
  return errors;
}

ErrorCurve curve_from_errors(const Vector& errors, const Vector& grid) {
  if (grid.size() < 2) throw Error(ErrorCategory::usage, "threshold grid needs at least two points");
  if (errors.size() == 0) throw Error(ErrorCategory::validation, "no errors to build a curve from");
  std::vector<double> sorted(errors.data(), errors.data() + errors.size());
  std::sort(sorted.begin(), sorted.end());
  ErrorCurve c;
  c.thresholds = grid;
  c.fractions.resize(grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), grid(i)) - sorted.begin();
    c.fractions(i) = static_cast<double>(count) / static_cast<double>(sorted.size());
  }
  double area = 0.0;
  for (Index i = 1; i < grid.size(); ++i) {
    area += 0.5 * (c.fractions(i) + c.fractions(i - 1)) * (grid(i) - grid(i - 1));
  }
  c.auc = area / (grid(grid.size() - 1) - grid(0));
  return c;
}

ErrorCurve error_curve(const PointMap& map, const std::vector<Index>& ground_truth, const TriMesh& target,
                       const Vector& grid) {
  return curve_from_errors(match_errors(map, ground_truth, target), grid);
}

Vector pool_errors(const std::vector<Vector>& per_pair) {
  Index total = 0;
  for (const auto& e : per_pair) total += e.size();
  Vector out(total);
  Index at = 0;
  for (const auto& e : per_pair) {
    out.segment(at, e.size()) = e;
    at += e.size();
  }
  return out;
}

ErrorSummary summarize(const Vector& errors, const ErrorCurve& curve) {
  ErrorSummary s;
  s.auc = curve.auc;
  if (errors.size() == 0) return s;
  s.mean_error = errors.mean();
  std::vector<double> v(errors.data(), errors.data() + errors.size());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median_error = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

std::vector<Index> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCategory::io, "cannot open ground-truth file " + path.string());
  std::vector<Index> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long v = 0;
    std::string rest;
    if (!(ls >> v) || (ls >> rest) || v < 0) {
      throw Error(ErrorCategory::parse, path.string() + ":" + std::to_string(lineno) +
                                            ": expected one nonnegative vertex index");
    }
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

void save_matches(const PointMap& map, const std::filesystem::path& path) {
  auto os = open_out(path);
  for (Index m : map.matches) os << m << '\n';
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

void write_curve_csv(const ErrorCurve& curve, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "threshold,fraction\n";
  for (Index i = 0; i < curve.thresholds.size(); ++i) {
    os << fmt6(curve.thresholds(i)) << ',' << fmt6(curve.fractions(i)) << '\n';
  }
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

void write_summary_json(const ErrorSummary& summary, const std::filesystem::path& path) {
  nlohmann::json j = {{"auc", summary.auc}, {"mean_error", summary.mean_error}, {"median_error", summary.median_error}};
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

void write_line_plot_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& x_label,
                         const std::string& y_label, bool log_y, const std::filesystem::path& path) {
  constexpr double width = 640, height = 420, left = 70, right = 160, top = 40, bottom = 55;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) {
    x0 = y0 = 0.0;
    x1 = y1 = 1.0;
  }
  if (log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  } else {
    y0 = std::min(y0, 0.0);
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (ty(y) - y0) / (y1 - y0) * ph; };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << fmt6(xv)
        << "</text>\n";
  }
  if (log_y) {
    for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); ++e) {
      const double yv = std::pow(10.0, e);
      svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
          << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4
          << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double yv = y0 + (y1 - y0) * k / 4.0;
      svg << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt6(yv)
          << "</text>\n";
    }
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">"
      << xml_escape(x_label) << "</text>\n"
      << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(y_label) << (log_y ? " (log scale)" : "") << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      svg << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    svg << "\"/>\n";
    const double ly = top + 16 + 18.0 * static_cast<double>(si);
    svg << "<line x1=\"" << left + pw + 10 << "\" x2=\"" << left + pw + 30 << "\" y1=\"" << ly - 4 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << left + pw + 35 << "\" y=\"" << ly << "\">" << xml_escape(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  auto os = open_out(path);
  os << svg.str();
}

void write_curves_svg(const std::vector<std::pair<std::string, ErrorCurve>>& curves,
                      const std::filesystem::path& path) {
  std::vector<PlotSeries> series;
  for (const auto& [label, c] : curves) {
    series.push_back({label, std::vector<double>(c.thresholds.data(), c.thresholds.data() + c.thresholds.size()),
                      std::vector<double>(c.fractions.data(), c.fractions.data() + c.fractions.size())});
  }
  write_line_plot_svg(series, "Geodesic error curve", "normalized geodesic error", "fraction of correspondences",
                      false, path);
}

}  // namespace heatcorr
