#include <doctest.h>

#include <cmath>
#include <limits>

#include "scoreis/evaluation.hpp"
#include "scoreis/rng.hpp"
#include "scoreis/samplers.hpp"

using namespace scoreis;

namespace {

// -x everywhere, except infinite at step `bad_t` for rows with |x0| > 1.5.
class TrapScore final : public ScoreFunction {
 public:
  explicit TrapScore(int bad_t) : bad_t_(bad_t) {}
  Eigen::Index dim() const override { return 2; }
  Eigen::MatrixXd score_batch(const Eigen::MatrixXd& points, int t) const override {
    Eigen::MatrixXd out = -points;
    if (t == bad_t_)
      for (Eigen::Index i = 0; i < points.rows(); ++i)
        if (std::abs(points(i, 0)) > 1.5) out(i, 0) = std::numeric_limits<double>::infinity();
    return out;
  }

 private:
  int bad_t_;
};

}  // namespace

TEST_SUITE("samplers") {
  TEST_CASE("step formulas") {
    const NoiseSchedule s(3, kDefaultEpsD, {0.1, 0.2, 0.3});
    const Eigen::Vector2d x(1.0, -1.0), q(0.5, 0.25), z(2.0, 3.0);
    const double b = 0.2;
    const Eigen::Vector2d anc = (x + b * q) / std::sqrt(1 - b) + std::sqrt(b) * z;
    CHECK((ancestral_step(q, s, x, 2, z) - anc).norm() < 1e-15);
    const Eigen::Vector2d em = x + 0.5 * b * x + b * q + std::sqrt(b) * z;
    CHECK((euler_maruyama_step(q, s, x, 2, z) - em).norm() < 1e-15);
    // No noise at the last step.
    CHECK(ancestral_step(q, s, x, 1, z) == ancestral_step(q, s, x, 1, Eigen::Vector2d::Zero()));
    CHECK(euler_maruyama_step(q, s, x, 1, z) == euler_maruyama_step(q, s, x, 1, Eigen::Vector2d::Zero()));
    CHECK_THROWS_AS(ancestral_step(q, s, x, 4, z), ContractViolation);
    CHECK(parse_step_variant("em") == StepVariant::EulerMaruyama);
    CHECK_THROWS_AS(parse_step_variant("ddim"), ConfigError);
  }

  TEST_CASE("zero weight gradient returns the base score bitwise") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MixtureScore score(mixture_8gaussians(), s);
    const WeightPtr flat = make_exp_linear(Eigen::Vector2d::Zero(), 0.3);
    RngStream rng(2, 0);
    Eigen::MatrixXd pts(40, 2);
    rng.fill_normal(pts);
    for (int t : {1, 200, 1000}) {
      const IssgmBatch b = issgm_score_batch(score, *flat, s, pts, t, 1e-3);
      CHECK(b.q_score == score.score_batch(pts, t));
    }
  }

  TEST_CASE("gaussian tilt of a normal is exact") {
    // For p = N(0, I) and l = exp(a.x) the approximation reproduces grad log q_t.
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MixtureScore score(standard_normal_mixture(2), s);
    const Eigen::Vector2d a(0.7, -0.4);
    const WeightPtr w = make_exp_linear(a, 0.0);
    const Eigen::Vector2d x(0.3, 1.1);
    for (int t : {1, 10, 500, 999}) {
      const double root = std::sqrt(s.alpha_bar(t));
      const Eigen::VectorXd q = issgm_score(score, *w, s, x, t, 1e-3);
      CHECK((q + x - root * a).norm() < 1e-9);
    }
  }

  TEST_CASE("tilted normal sampling recovers the shifted mean") {
    const NoiseSchedule s = build_cosine_schedule(100);
    const MixtureScore score(standard_normal_mixture(2), s);
    const Eigen::Vector2d a(1.0, -0.5);
    const WeightPtr w = make_exp_linear(a, 0.0);
    SamplerConfig cfg;
    cfg.n_samples = 4000;
    cfg.seed = 17;
    const SamplerResult r = run_sampler(score, w.get(), s, cfg);
    REQUIRE(r.failures.empty());
    const Eigen::RowVector2d mean = r.batch.data.colwise().mean();
    CHECK(std::abs(mean(0) - a(0)) < 4.0 / std::sqrt(4000.0));
    CHECK(std::abs(mean(1) - a(1)) < 4.0 / std::sqrt(4000.0));
  }

  TEST_CASE("results do not depend on thread count or batch size") {
    const NoiseSchedule s = build_cosine_schedule(50);
    const MixtureScore score(mixture_8gaussians(), s);
    const WeightPtr w = make_norm_squared();
    SamplerConfig cfg;
    cfg.n_samples = 600;
    cfg.seed = 5;
    cfg.threads = 1;
    const SamplerResult one = run_sampler(score, w.get(), s, cfg);
    cfg.threads = 3;
    const SamplerResult three = run_sampler(score, w.get(), s, cfg);
    CHECK(one.batch.data == three.batch.data);
    cfg.n_samples = 300;
    const SamplerResult prefix = run_sampler(score, w.get(), s, cfg);
    CHECK(prefix.batch.data == one.batch.data.topRows(300));
    cfg.variant = StepVariant::EulerMaruyama;
    CHECK(run_sampler(score, w.get(), s, cfg).batch.data != prefix.batch.data);
  }

  TEST_CASE("trajectories") {
    const NoiseSchedule s = build_cosine_schedule(20);
    const MixtureScore score(mixture_8gaussians(), s);
    const WeightPtr w = make_norm_squared();
    SamplerConfig cfg;
    cfg.n_samples = 10;
    cfg.trace_chains = 3;
    const SamplerResult r = run_sampler(score, w.get(), s, cfg);
    REQUIRE(r.trajectories.size() == 3);
    const Trajectory& tr = r.trajectories[1];
    CHECK(tr.chain == 1);
    CHECK(tr.t.front() == 20);
    CHECK(tr.t.back() == 0);
    CHECK(tr.states.rows() == 21);
    CHECK(tr.states.row(20) == r.batch.data.row(1));
  }

  TEST_CASE("non-finite chains are recorded and dropped") {
    const NoiseSchedule s = build_cosine_schedule(100);
    const TrapScore score(50);
    SamplerConfig cfg;
    cfg.n_samples = 2000;
    cfg.seed = 1;
    const SamplerResult r = run_sampler(score, nullptr, s, cfg);
    REQUIRE_FALSE(r.failures.empty());
    CHECK(r.batch.count() + static_cast<Eigen::Index>(r.failures.size()) == 2000);
    for (const auto& f : r.failures) CHECK(f.step == 50);
    CHECK(r.batch.data.allFinite());
  }

  TEST_CASE("accept-reject") {
    const BaseSampler base = [](Eigen::Index n, std::uint64_t seed) { return sample_8gaussians(n, seed); };
    const auto constant = [](const Eigen::VectorXd&) { return 2.0; };
    const AcceptRejectResult all = accept_reject_sample(base, constant, 2.0, 500, 3);
    CHECK(all.acceptance_rate == 1.0);
    CHECK(all.bound_violations == 0);

    const WeightPtr sq = make_norm_squared();
    const AcceptRejectResult loose = accept_reject_sample(base, *sq, 0.1, 500, 3);
    CHECK(loose.bound_violations > 0);
    CHECK(loose.max_weight_seen > 0.1);

    const AcceptRejectResult a = accept_reject_sample(base, *sq, 2.21, 1000, 8);
    const AcceptRejectResult b = accept_reject_sample(base, *sq, 2.21, 1000, 8);
    CHECK(a.batch.data == b.batch.data);
    CHECK(a.acceptance_rate > 0.2);
    CHECK_THROWS_AS(accept_reject_sample(base, constant, 0.0, 10, 0), ConfigError);
  }

  TEST_CASE("tweedie mean") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MixtureScore normal(standard_normal_mixture(2), s);
    const Eigen::Vector2d x(0.9, -0.2);
    for (int t : {1, 300, 900})
      CHECK((tweedie_mean(normal, s, x, t) - std::sqrt(s.alpha_bar(t)) * x).norm() < 1e-14);
    const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
    CHECK(tweedie_mean_from_score(x, zero, 0.25) == 2.0 * x);
    CHECK((tweedie_mean_from_score(x, -x, 1.0 - 1e-12) - x).norm() < 1e-11);
  }

  TEST_CASE("step limits") {
    const NoiseSchedule tiny(2, kDefaultEpsD, {kBetaFloor, 0.5});
    const Eigen::Vector2d x(1.5, -0.5), q(0.3, 0.7), zero = Eigen::Vector2d::Zero();
    CHECK((ancestral_step(q, tiny, x, 1, zero) - x).norm() <= 1e-9 * (1 + x.norm()));
    CHECK(ancestral_step(zero, tiny, x, 2, zero) == x / std::sqrt(0.5));
    CHECK(euler_maruyama_step(zero, tiny, x, 2, zero) == 1.25 * x);

    // The two discretizations agree to second order in beta.
    for (double b : {1e-3, 1e-4, 1e-5}) {
      const NoiseSchedule s(2, kDefaultEpsD, {0.5, b});
      const Eigen::Vector2d z(0.4, -1.0);
      const double diff = (ancestral_step(q, s, x, 2, z) - euler_maruyama_step(q, s, x, 2, z)).norm();
      CHECK(diff <= 5.0 * b * b * (x.norm() + q.norm()));
      const Eigen::Vector2d det = euler_maruyama_step(q, s, x, 2, zero);
      CHECK((euler_maruyama_step(q, s, x, 2, z) - det).norm() == doctest::Approx(std::sqrt(b) * z.norm()));
    }
  }

  TEST_CASE("unweighted sampling of a standard normal") {
    const NoiseSchedule s = build_cosine_schedule(100);
    const MixtureScore score(standard_normal_mixture(2), s);
    SamplerConfig cfg;
    cfg.n_samples = 10000;
    cfg.seed = 23;
    const SamplerResult r = run_sampler(score, nullptr, s, cfg);
    const Eigen::MatrixXd& x = r.batch.data;
    const Eigen::RowVector2d mean = x.colwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() < 3.0 / std::sqrt(10000.0));
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::Matrix2d cov = centered.transpose() * centered / double(x.rows() - 1);
    CHECK((cov - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.05);
  }

  TEST_CASE("approximate score near t = 0 tracks quadrature on 8gaussians") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MixtureScore score(mixture_8gaussians(), s);
    const WeightPtr w = make_norm_squared();
    const BaseDensity p0 = base_density(mixture_8gaussians());
    const Eigen::MatrixXd probes = sample_8gaussians(10, 202).data;
    for (Eigen::Index i = 0; i < probes.rows(); ++i) {
      const Eigen::Vector2d x = probes.row(i).transpose();
      const Eigen::VectorXd approx = issgm_score(score, *w, s, x, 10, 1e-3);
      const Eigen::Vector2d exact = quadrature_q_score(p0, w.get(), s, 10, x).score;
      CHECK((approx - exact).norm() <= 0.05 * exact.norm());
    }
  }

  TEST_CASE("oracle mean weight matches the moment ratio") {
    // For 8gaussians and l1, E_q[l] = E_p[l^2] / E_p[l] with
    // E_p[l] = m^2 + 2 s^2 and E_p[l^2] = m^4 + 8 m^2 s^2 + 8 s^4 (the floor is negligible).
    const double m2 = 0.64, s2 = 0.0025;
    const double expect = (m2 * m2 + 8 * m2 * s2 + 8 * s2 * s2) / (m2 + 2 * s2);
    const BaseSampler base = [](Eigen::Index n, std::uint64_t seed) { return sample_8gaussians(n, seed); };
    const WeightPtr sq = make_norm_squared();
    const AcceptRejectResult r = accept_reject_sample(base, *sq, 2.21, 100000, 4);
    const MeanEstimate est = mean_weight(r.batch, *sq);
    CHECK(std::abs(est.mean - expect) <= 3.0 * est.std_error);
  }
}
