#pragma once

// Point-to-point matches from soft maps, geodesic error curves and their exports.

#include <filesystem>
#include <string>
#include <vector>

#include "heatcorr/corrnet.hpp"
#include "heatcorr/mesh.hpp"
#include "heatcorr/types.hpp"

namespace heatcorr {

struct PointMap {
  std::vector<Index> matches;  // target vertex per source vertex
  Vector confidence;           // Q mass at the match
};

/// Column-wise argmax of Q (N_target x N_source); ties go to the smallest index.
template <typename Derived>
PointMap extract_matches(const Eigen::MatrixBase<Derived>& q) {
  PointMap map;
  map.matches.resize(static_cast<std::size_t>(q.cols()));
  map.confidence.resize(q.cols());
  for (Index s = 0; s < q.cols(); ++s) {
    Index best = 0;
    for (Index t = 1; t < q.rows(); ++t) {
      if (q(t, s) > q(best, s)) best = t;
    }
    map.matches[static_cast<std::size_t>(s)] = best;
    map.confidence(s) = static_cast<double>(q(best, s));
  }
  return map;
}

inline PointMap extract_matches(const SoftCorrespondence& soft) { return extract_matches(soft.soft_map); }

struct ErrorCurve {
  Vector thresholds;
  Vector fractions;
  double auc = 0.0;
};

struct ErrorSummary {
  double auc = 0.0;
  double mean_error = 0.0;
  double median_error = 0.0;
};

inline constexpr double kDefaultCurveCeiling = 0.25;
inline constexpr int kDefaultCurveIntervals = 100;

/// lo + (hi - lo) * i / intervals for i = 0..intervals.
Vector threshold_grid(double lo = 0.0, double hi = kDefaultCurveCeiling, int intervals = kDefaultCurveIntervals);

/// Geodesic distance on the target between predicted and true matches, divided
/// by sqrt(target area). Only rows at the ground-truth vertices are computed.
Vector match_errors(const PointMap& map, const std::vector<Index>& ground_truth, const TriMesh& target,
                    unsigned threads = 0);

/// Fraction of errors <= each threshold; auc is the trapezoid integral over the
/// grid divided by its span.
ErrorCurve curve_from_errors(const Vector& errors, const Vector& grid);

ErrorCurve error_curve(const PointMap& map, const std::vector<Index>& ground_truth, const TriMesh& target,
                       const Vector& grid);

/// Per-vertex pooling: every error of every pair counts once.
Vector pool_errors(const std::vector<Vector>& per_pair);

ErrorSummary summarize(const Vector& errors, const ErrorCurve& curve);

/// One 0-based target index per line.
std::vector<Index> load_ground_truth(const std::filesystem::path& path);
void save_matches(const PointMap& map, const std::filesystem::path& path);

/// `threshold,fraction`, 6 significant digits.
void write_curve_csv(const ErrorCurve& curve, const std::filesystem::path& path);
void write_summary_json(const ErrorSummary& summary, const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal standalone SVG line chart with labeled axes.
void write_line_plot_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& x_label,
                         const std::string& y_label, bool log_y, const std::filesystem::path& path);

void write_curves_svg(const std::vector<std::pair<std::string, ErrorCurve>>& curves,
                      const std::filesystem::path& path);

}  // namespace heatcorr
