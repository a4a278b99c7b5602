#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "scoreis/datasets.hpp"
#include "scoreis/schedule.hpp"
#include "scoreis/score_models.hpp"
#include "scoreis/weights.hpp"

namespace scoreis {

struct Bounds2d {
  double x_min = -1.2;
  double x_max = 1.2;
  double y_min = -1.2;
  double y_max = 1.2;

  friend bool operator==(const Bounds2d&, const Bounds2d&) = default;
};

inline constexpr int kDefaultBins = 100;

/// 2-D histogram. Bins are half-open [lo, hi) except the last bin on each
/// axis, which is closed. Out-of-bounds samples go to `overflow` and are
/// excluded from `density`.
struct HistogramGrid {
  Bounds2d bounds;
  int bins_x = 0;
  int bins_y = 0;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  Eigen::MatrixXd density;
  std::int64_t overflow = 0;

  std::int64_t in_bounds() const { return counts.sum(); }
};

HistogramGrid histogram2d(const Eigen::MatrixXd& points, const Bounds2d& bounds, int bins_x, int bins_y);

/// Jensen-Shannon divergence with natural logarithm; result in [0, ln 2].
double jsd(const HistogramGrid& a, const HistogramGrid& b);

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Sample mean of l(x) with its standard error.
MeanEstimate mean_weight(const SampleBatch& batch, const WeightFunction& weight);

/// log p_0 for the quadrature oracle, with a box outside which p_0 is negligible.
struct BaseDensity {
  std::function<double(const Eigen::Vector2d&)> log_p;
  Bounds2d support;
};

/// Support box spans each component mean +- `stds` standard deviations.
BaseDensity base_density(const GaussianMixture& gm, double stds = 8.0);
BaseDensity base_density(const RingMixture& rm, double stds = 8.0);

struct QuadratureOptions {
  int nodes = 400;
  /// Half-width of the integration window in kernel standard deviations.
  double kernel_span = 8.0;
  /// Also integrate with 2 * nodes - 1 nodes and report the change.
  bool self_check = true;
};

struct QuadratureResult {
  Eigen::Vector2d score;
  double self_convergence = 0.0;  // max-abs change under node doubling
};

/// grad_x log q_t(x) for q_0 ~ l p_0 by tensor-product trapezoid quadrature of
///   q_t(x) = int N(x; sqrt(ab) y, (1 - ab) I) l(y) p_0(y) dy
/// with log-space accumulation.
QuadratureResult quadrature_q_score(const BaseDensity& p0, const WeightFunction* weight, const NoiseSchedule& schedule,
                                    int t, const Eigen::Vector2d& x, const QuadratureOptions& options = {});

struct GapRow {
  int t = 0;
  double mean_gap = 0.0;
  double max_gap = 0.0;
  double max_self_convergence = 0.0;
};

struct GapReport {
  std::vector<GapRow> rows;
  Eigen::MatrixXd probes;
};

/// ||grad log q_t - approximated grad log q_t|| over probes (rows) at each t.
GapReport score_gap_report(const ScoreFunction& score, const WeightFunction& weight, const BaseDensity& p0,
                           const NoiseSchedule& schedule, const Eigen::MatrixXd& probes,
                           const std::vector<int>& t_values, double epsilon,
                           const QuadratureOptions& options = {});

}  // namespace scoreis
