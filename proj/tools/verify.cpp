#include "verify.hpp"

#include <algorithm>
#include <cmath>

#include "scoreis/autodiff.hpp"
#include "scoreis/datasets.hpp"
#include "scoreis/errors.hpp"
#include "scoreis/rng.hpp"
#include "scoreis/samplers.hpp"
#include "scoreis/weights.hpp"

namespace scoreis::cli {

using nlohmann::json;

void CheckList::add(const std::string& name, double value, double tolerance, bool pass) {
  checks_.push_back({{"name", name}, {"value", value}, {"tolerance", tolerance}, {"pass", pass}});
  pass_ = pass_ && pass;
}

json CheckList::to_json() const { return {{"pass", pass_}, {"checks", checks_}}; }

namespace {

Eigen::MatrixXd normal_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed, std::uint64_t stream) {
  RngStream rng(seed, stream);
  Eigen::MatrixXd pts(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) pts(i, j) = rng.normal();
  return pts;
}

}  // namespace

CheckList verify_gradcheck(double tolerance, std::uint64_t seed) {
  CheckList checks;
  RngStream rng(seed, 0);

  const Eigen::MatrixXd w = normal_points(4, 3, seed, 1);
  const Eigen::VectorXd b = normal_points(4, 1, seed, 2).col(0);
  struct Field {
    const char* name;
    ad::ScalarField f;
  };
  const std::vector<Field> fields{
      {"sum_exp_scale", [](ad::Tape& tp, ad::NodeId x) { return tp.sum(tp.exp(tp.scale(x, 0.5))); }},
      {"log_one_plus_norm_sq",
       [](ad::Tape& tp, ad::NodeId x) {
         return tp.log(tp.add(tp.leaf(ad::Tensor::scalar(1.0)), tp.norm_sq(x)));
       }},
      {"relu_layer",
       [&](ad::Tape& tp, ad::NodeId x) {
         const ad::NodeId h = tp.add(tp.matvec(tp.leaf(ad::Tensor::matrix(w)), x), tp.leaf(ad::Tensor::vector(b)));
         return tp.mean(tp.mul(tp.relu(h), h));
       }},
      {"dot_self_product", [](ad::Tape& tp, ad::NodeId x) { return tp.dot(tp.mul(x, x), tp.sub(x, tp.exp(x))); }},
  };
  const Eigen::MatrixXd xs = normal_points(20, 3, seed, 3);
  for (const auto& field : fields) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      const double e = ad::grad_check(field.f, ad::Tensor::vector(xs.row(i).transpose()), 1e-6);
      worst = std::isnan(e) ? e : std::max(worst, e);
      if (std::isnan(worst)) break;
    }
    checks.add(std::string("autodiff/") + field.name, worst, tolerance, worst <= tolerance);
  }

  const Eigen::MatrixXd pts = normal_points(200, 2, seed, 4);
  for (const std::string spec : {"norm_sq", "elem_sum", "exp_linear:0.7,-0.3,0.1", "logistic:1.5,-2,0.3"}) {
    const WeightPtr wf = parse_weight_spec(spec, 2);
    const double e = check_weight_gradient(*wf, pts);
    checks.add("weight/" + spec, e, tolerance, e <= tolerance);
  }

  // Closed-form gradients against the same weights built on the tape.
  const WeightPtr ad_norm = make_autodiff_weight("norm_sq_tape", [](ad::Tape& tp, ad::NodeId x) {
    return tp.norm_sq(x);
  });
  const WeightPtr closed_norm = make_norm_squared();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Eigen::VectorXd x = pts.row(i).transpose();
    if (closed_norm->floor_active(x)) continue;
    worst = std::max(worst, (ad_norm->grad_log_l(x) - closed_norm->grad_log_l(x)).cwiseAbs().maxCoeff());
  }
  checks.add_le("weight/norm_sq_closed_vs_tape", worst, tolerance);
  return checks;
}

CheckList verify_schedule(int steps, double eps_d) {
  CheckList checks;
  const NoiseSchedule s = build_cosine_schedule(steps, eps_d);
  double telescoping = 0.0;
  int non_monotone = 0;
  int beta_out_of_range = 0;
  for (int t = 1; t <= steps; ++t) {
    telescoping = std::max(telescoping, std::abs(s.alpha_bar(t) - s.alpha_bar(t - 1) * (1.0 - s.beta(t))));
    non_monotone += !(s.alpha_bar(t) < s.alpha_bar(t - 1));
    beta_out_of_range += !(s.beta(t) >= kBetaFloor && s.beta(t) <= kBetaCeiling);
  }
  checks.add("alpha_bar_0_is_one", s.alpha_bar(0), 1.0, s.alpha_bar(0) == 1.0);
  checks.add("telescoping_max_abs", telescoping, 0.0, telescoping == 0.0);
  checks.add("strictly_decreasing_violations", non_monotone, 0.0, non_monotone == 0);
  checks.add("beta_range_violations", beta_out_of_range, 0.0, beta_out_of_range == 0);
  checks.add_le("alpha_bar_T", s.alpha_bar(steps), 1e-3);
  return checks;
}

CheckList verify_score_oracle(int steps, double eps_d, double tolerance, const QuadratureOptions& options) {
  CheckList checks;
  const NoiseSchedule s = build_cosine_schedule(steps, eps_d);
  Eigen::MatrixXd shifted_mean(1, 2);
  shifted_mean << 0.5, -0.3;
  const std::vector<std::pair<std::string, GaussianMixture>> cases{
      {"8gaussians", mixture_8gaussians()},
      {"shifted_normal", GaussianMixture(Eigen::VectorXd::Ones(1), shifted_mean, {Eigen::MatrixXd::Identity(2, 2)})},
  };
  for (const auto& [name, gm] : cases) {
    const BaseDensity p0 = base_density(gm);
    for (int t : {steps / 10, steps / 2, 9 * steps / 10}) {
      double err = 0.0;
      double conv = 0.0;
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          const Eigen::Vector2d x(-1.0 + 0.5 * i, -1.0 + 0.5 * j);
          const QuadratureResult q = quadrature_q_score(p0, nullptr, s, t, x, options);
          err = std::max(err, (q.score - mixture_perturbed_score(gm, s, t, x)).cwiseAbs().maxCoeff());
          conv = std::max(conv, q.self_convergence);
        }
      }
      checks.add_le(name + "/t=" + std::to_string(t) + "/max_abs", err, tolerance);
      checks.add_le(name + "/t=" + std::to_string(t) + "/self_convergence", conv, 1e-4);
    }
  }
  return checks;
}

GapOutcome verify_gap(const GapSetup& setup, const QuadratureOptions& options) {
  if (setup.t_values.empty()) throw ConfigError("gap: empty --t-list");
  if (setup.probes < 1) throw ConfigError("gap: --probes must be at least 1");
  const NoiseSchedule s = build_cosine_schedule(setup.steps, setup.eps_d);
  for (int t : setup.t_values)
    if (t < 1 || t > setup.steps) throw ConfigError("gap: t values must lie in 1..T");

  GapOutcome out;
  if (setup.base_case == "gaussian-exp") {
    const GaussianMixture gm = standard_normal_mixture(2);
    const MixtureScore score(gm, s);
    const WeightPtr w = make_exp_linear(Eigen::Vector2d(1.0, 0.0), 0.0);
    const Eigen::MatrixXd probes = normal_points(setup.probes, 2, setup.seed, 0);
    out.report = score_gap_report(score, *w, base_density(gm, 12.0), s, probes, setup.t_values, setup.epsilon, options);
    double worst = 0.0;
    for (const auto& row : out.report.rows) worst = std::max(worst, row.max_gap);
    out.checks.add_le("max_gap", worst, 1e-8);
  } else if (setup.base_case == "8gaussians") {
    const GaussianMixture gm = mixture_8gaussians();
    const MixtureScore score(gm, s);
    const WeightPtr w = parse_weight_spec(setup.weight_spec, 2, setup.weight_floor);
    const Eigen::MatrixXd probes = sample_8gaussians(setup.probes, setup.seed).data;
    out.report = score_gap_report(score, *w, base_density(gm), s, probes, setup.t_values, setup.epsilon, options);
    const auto by_t = [](const GapRow& a, const GapRow& b) { return a.t < b.t; };
    const GapRow& lo = *std::min_element(out.report.rows.begin(), out.report.rows.end(), by_t);
    const GapRow& hi = *std::max_element(out.report.rows.begin(), out.report.rows.end(), by_t);
    out.checks.add("mean_gap_smallest_t_below_largest_t", lo.mean_gap, hi.mean_gap, lo.mean_gap < hi.mean_gap);
  } else {
    throw ConfigError("gap: unknown --case '" + setup.base_case + "' (expected 8gaussians or gaussian-exp)");
  }
  double conv = 0.0;
  for (const auto& row : out.report.rows) conv = std::max(conv, row.max_self_convergence);
  out.checks.add_le("quadrature_self_convergence", conv, 1e-4);
  return out;
}

}  // namespace scoreis::cli
