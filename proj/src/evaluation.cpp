#include "scoreis/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scoreis/errors.hpp"
#include "scoreis/samplers.hpp"

namespace scoreis {

namespace {

// Bin index on one axis, or -1 when outside [lo, hi].
int bin_index(double v, double lo, double hi, int bins) {
  if (!(v >= lo) || !(v <= hi)) return -1;
  if (v == hi) return bins - 1;
  const int k = static_cast<int>((v - lo) / (hi - lo) * bins);
  return std::min(k, bins - 1);
}

struct Window {
  double lo_x, hi_x, lo_y, hi_y;
};

Window integration_window(const Bounds2d& support, const Eigen::Vector2d& center, double half_width) {
  Window w{std::max(support.x_min, center.x() - half_width), std::min(support.x_max, center.x() + half_width),
           std::max(support.y_min, center.y() - half_width), std::min(support.y_max, center.y() + half_width)};
  if (!(w.lo_x < w.hi_x) || !(w.lo_y < w.hi_y)) w = {support.x_min, support.x_max, support.y_min, support.y_max};
  return w;
}

Eigen::Vector2d trapezoid_score(const BaseDensity& p0, const WeightFunction* weight, double alpha_bar,
                                const Eigen::Vector2d& x, const Window& win, int nodes) {
  const double root = std::sqrt(alpha_bar);
  const double var = 1.0 - alpha_bar;
  const double hx = (win.hi_x - win.lo_x) / (nodes - 1);
  const double hy = (win.hi_y - win.lo_y) / (nodes - 1);
  const auto edge = [nodes](int i) { return i == 0 || i == nodes - 1 ? std::log(0.5) : 0.0; };

  Eigen::VectorXd log_w(static_cast<Eigen::Index>(nodes) * nodes);
  Eigen::Matrix<double, Eigen::Dynamic, 2> drift(log_w.size(), 2);
  Eigen::VectorXd y(2);
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      const Eigen::Index k = static_cast<Eigen::Index>(i) * nodes + j;
      y << win.lo_x + i * hx, win.lo_y + j * hy;
      const Eigen::Vector2d r = x - root * Eigen::Vector2d(y(0), y(1));
      double lw = edge(i) + edge(j) - r.squaredNorm() / (2.0 * var) + p0.log_p(Eigen::Vector2d(y(0), y(1)));
      if (weight) lw += weight->log_l(y);
      log_w(k) = lw;
      drift.row(k) = (-r / var).transpose();
    }
  }
  const double peak = log_w.maxCoeff();
  if (!std::isfinite(peak)) throw NumericalError("quadrature: integrand vanishes on the window");
  const Eigen::VectorXd w = (log_w.array() - peak).exp().matrix();
  return (drift.transpose() * w) / w.sum();
}

}  // namespace

HistogramGrid histogram2d(const Eigen::MatrixXd& points, const Bounds2d& bounds, int bins_x, int bins_y) {
  if (points.cols() != 2) throw ContractViolation("histogram2d: points must have two columns");
  if (bins_x < 1 || bins_y < 1) throw ContractViolation("histogram2d: bin counts must be positive");
  if (!(bounds.x_min < bounds.x_max) || !(bounds.y_min < bounds.y_max))
    throw ContractViolation("histogram2d: empty bounds");
  HistogramGrid grid;
  grid.bounds = bounds;
  grid.bins_x = bins_x;
  grid.bins_y = bins_y;
  grid.counts = decltype(grid.counts)::Zero(bins_x, bins_y);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int ix = bin_index(points(i, 0), bounds.x_min, bounds.x_max, bins_x);
    const int iy = bin_index(points(i, 1), bounds.y_min, bounds.y_max, bins_y);
    if (ix < 0 || iy < 0) {
      ++grid.overflow;
      continue;
    }
    ++grid.counts(ix, iy);
  }
  const std::int64_t total = grid.in_bounds();
  grid.density = total > 0 ? Eigen::MatrixXd(grid.counts.cast<double>() / static_cast<double>(total))
                           : Eigen::MatrixXd::Zero(bins_x, bins_y);
  return grid;
}

double jsd(const HistogramGrid& a, const HistogramGrid& b) {
  if (!(a.bounds == b.bounds) || a.bins_x != b.bins_x || a.bins_y != b.bins_y)
    throw ContractViolation("jsd: histograms use different grids");
  if (a.in_bounds() == 0 || b.in_bounds() == 0) throw ContractViolation("jsd: empty histogram");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < a.density.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.density.rows(); ++i) {
      const double p = a.density(i, j), q = b.density(i, j);
      const double m = 0.5 * (p + q);
      const double tp = p > 0.0 ? 0.5 * p * std::log(p / m) : 0.0;
      const double tq = q > 0.0 ? 0.5 * q * std::log(q / m) : 0.0;
      sum += tp + tq;
    }
  }
  return std::clamp(sum, 0.0, std::log(2.0));
}

MeanEstimate mean_weight(const SampleBatch& batch, const WeightFunction& weight) {
  const Eigen::Index n = batch.count();
  if (n < 1) throw ContractViolation("mean_weight: empty batch");
  const Eigen::VectorXd l = weight.log_l_batch(batch.data).array().exp().matrix();
  MeanEstimate est;
  est.mean = l.mean();
  if (n > 1) {
    const double var = (l.array() - est.mean).square().sum() / static_cast<double>(n - 1);
    est.std_error = std::sqrt(var / static_cast<double>(n));
  }
  return est;
}

BaseDensity base_density(const GaussianMixture& gm, double stds) {
  if (gm.dim() != 2) throw ContractViolation("base_density: mixture must be two-dimensional");
  Bounds2d box{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (Eigen::Index k = 0; k < gm.components(); ++k) {
    const Eigen::MatrixXd& cov = gm.covariances()[static_cast<std::size_t>(k)];
    const double sx = stds * std::sqrt(cov(0, 0)), sy = stds * std::sqrt(cov(1, 1));
    box.x_min = std::min(box.x_min, gm.means()(k, 0) - sx);
    box.x_max = std::max(box.x_max, gm.means()(k, 0) + sx);
    box.y_min = std::min(box.y_min, gm.means()(k, 1) - sy);
    box.y_max = std::max(box.y_max, gm.means()(k, 1) + sy);
  }
  return {[gm](const Eigen::Vector2d& y) { return gm.log_density(y); }, box};
}

BaseDensity base_density(const RingMixture& rm, double stds) {
  double reach = 0.0;
  for (const auto& ring : rm.rings()) reach = std::max(reach, ring.radius + stds * ring.noise_std);
  return {[rm](const Eigen::Vector2d& y) { return rm.log_density(y); }, {-reach, reach, -reach, reach}};
}

QuadratureResult quadrature_q_score(const BaseDensity& p0, const WeightFunction* weight, const NoiseSchedule& schedule,
                                    int t, const Eigen::Vector2d& x, const QuadratureOptions& options) {
  if (t < 1 || t > schedule.steps()) throw ContractViolation("quadrature: t out of range");
  if (options.nodes < 3) throw ContractViolation("quadrature: need at least 3 nodes");
  const double ab = schedule.alpha_bar(t);
  const double half_width = options.kernel_span * std::sqrt((1.0 - ab) / ab);
  const Window win = integration_window(p0.support, x / std::sqrt(ab), half_width);

  QuadratureResult out;
  out.score = trapezoid_score(p0, weight, ab, x, win, options.nodes);
  if (options.self_check) {
    const Eigen::Vector2d fine = trapezoid_score(p0, weight, ab, x, win, 2 * options.nodes - 1);
    out.self_convergence = (fine - out.score).cwiseAbs().maxCoeff();
    out.score = fine;
  }
  return out;
}

GapReport score_gap_report(const ScoreFunction& score, const WeightFunction& weight, const BaseDensity& p0,
                           const NoiseSchedule& schedule, const Eigen::MatrixXd& probes,
                           const std::vector<int>& t_values, double epsilon, const QuadratureOptions& options) {
  if (probes.cols() != 2 || probes.rows() < 1) throw ContractViolation("gap report: probes must be n x 2, n >= 1");
  GapReport report;
  report.probes = probes;
  for (int t : t_values) {
    const IssgmBatch approx = issgm_score_batch(score, weight, schedule, probes, t, epsilon);
    GapRow row;
    row.t = t;
    double total = 0.0;
    for (Eigen::Index i = 0; i < probes.rows(); ++i) {
      const Eigen::Vector2d x = probes.row(i).transpose();
      const QuadratureResult exact = quadrature_q_score(p0, &weight, schedule, t, x, options);
      const double gap = (exact.score - approx.q_score.row(i).transpose()).norm();
      total += gap;
      row.max_gap = std::max(row.max_gap, gap);
      row.max_self_convergence = std::max(row.max_self_convergence, exact.self_convergence);
    }
    row.mean_gap = total / static_cast<double>(probes.rows());
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace scoreis
