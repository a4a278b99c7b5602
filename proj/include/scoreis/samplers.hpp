#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scoreis/datasets.hpp"
#include "scoreis/schedule.hpp"
#include "scoreis/score_models.hpp"
#include "scoreis/weights.hpp"

namespace scoreis {

enum class StepVariant { Ancestral, EulerMaruyama };

std::string to_string(StepVariant v);
StepVariant parse_step_variant(const std::string& name);  // "ancestral" | "em"

inline constexpr double kDefaultProbeEpsilon = 1e-3;

struct SamplerConfig {
  double epsilon = kDefaultProbeEpsilon;
  Eigen::Index n_samples = 1000;
  std::uint64_t seed = 0;
  StepVariant variant = StepVariant::Ancestral;
  /// Record full trajectories for the first `trace_chains` chains.
  Eigen::Index trace_chains = 0;
  /// Worker threads; 0 picks the hardware concurrency. Results do not depend on it.
  unsigned threads = 0;
};

// ---- expression-level kernels (one state per row or a single vector) ----

/// Posterior mean of the clean state: (x + (1 - ab) s) / sqrt(ab).
template <typename DerivedX, typename DerivedS>
auto tweedie_mean_from_score(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedS>& score,
                             typename DerivedX::Scalar alpha_bar) {
  using Scalar = typename DerivedX::Scalar;
  return ((x + (Scalar(1) - alpha_bar) * score) / std::sqrt(alpha_bar)).eval();
}

/// s + delta / sqrt(ab) + (s_probe - s) (1 - ab) / (eps sqrt(ab)).
template <typename DerivedS, typename DerivedP, typename DerivedD>
auto issgm_combine(const Eigen::MatrixBase<DerivedS>& score, const Eigen::MatrixBase<DerivedP>& probe_score,
                   const Eigen::MatrixBase<DerivedD>& delta, typename DerivedS::Scalar alpha_bar,
                   typename DerivedS::Scalar epsilon) {
  using Scalar = typename DerivedS::Scalar;
  const Scalar root = std::sqrt(alpha_bar);
  return (score + delta / root + (probe_score - score) * ((Scalar(1) - alpha_bar) / (epsilon * root))).eval();
}

/// Ancestral update (x + beta q) / sqrt(1 - beta) + sqrt(beta) z; z is ignored at t = 1.
Eigen::VectorXd ancestral_step(const Eigen::VectorXd& q_score, const NoiseSchedule& schedule,
                               const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& z);

/// Euler-Maruyama update x + (beta / 2) x + beta q + sqrt(beta) z; z is ignored at t = 1.
Eigen::VectorXd euler_maruyama_step(const Eigen::VectorXd& q_score, const NoiseSchedule& schedule,
                                    const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& z);

// ---- score-level operations ----

Eigen::VectorXd tweedie_mean(const ScoreFunction& score, const NoiseSchedule& schedule, const Eigen::VectorXd& x,
                             int t);

/// Approximate grad log q_t from the base score, using two score evaluations
/// (at x and at x + eps * delta) and one weight gradient at the posterior mean.
Eigen::VectorXd issgm_score(const ScoreFunction& score, const WeightFunction& weight, const NoiseSchedule& schedule,
                            const Eigen::VectorXd& x, int t, double epsilon);

struct IssgmBatch {
  Eigen::MatrixXd q_score;     // approximated grad log q_t per row
  Eigen::MatrixXd base_score;  // grad log p_t per row
  Eigen::MatrixXd mean;        // posterior mean per row
  Eigen::MatrixXd delta;       // grad log l at the mean per row
};

/// Row-wise issgm_score. Rows whose delta is exactly zero return the base
/// score bitwise. Non-finite rows are left for the caller to detect.
IssgmBatch issgm_score_batch(const ScoreFunction& score, const WeightFunction& weight, const NoiseSchedule& schedule,
                             const Eigen::MatrixXd& points, int t, double epsilon);

/// Per-step record of one chain; row k describes step t = T - k, the final
/// row is t = 0 and holds the emitted sample.
struct Trajectory {
  Eigen::Index chain = 0;
  std::vector<int> t;
  Eigen::MatrixXd states;
  Eigen::MatrixXd tweedie_means;
  Eigen::VectorXd grad_log_l_norm;
  Eigen::VectorXd correction_norm;
};

struct ChainFailure {
  Eigen::Index chain;
  int step;
};

struct SamplerResult {
  SampleBatch batch;  // successful chains, in chain order
  std::vector<ChainFailure> failures;
  std::vector<Trajectory> trajectories;
};

/// Backward diffusion from x_T ~ N(0, I). With a weight, every step uses the
/// approximated importance score; without one, the raw base score. Chain i
/// draws from RngStream(seed, i) in both cases.
SamplerResult run_sampler(const ScoreFunction& score, const WeightFunction* weight, const NoiseSchedule& schedule,
                          const SamplerConfig& config);

/// Draws n proposals with the given seed.
using BaseSampler = std::function<SampleBatch(Eigen::Index n, std::uint64_t seed)>;
using WeightValue = std::function<double(const Eigen::VectorXd&)>;

struct AcceptRejectResult {
  SampleBatch batch;
  std::uint64_t proposals = 0;
  double acceptance_rate = 0.0;
  /// Proposals with l(x) > M; their acceptance probability is clamped to 1.
  std::uint64_t bound_violations = 0;
  double max_weight_seen = 0.0;
};

/// Exact sampling from q ~ l p by accepting proposals with probability l(x) / M.
AcceptRejectResult accept_reject_sample(const BaseSampler& base, const WeightValue& weight, double bound_m,
                                        Eigen::Index n, std::uint64_t seed);
AcceptRejectResult accept_reject_sample(const BaseSampler& base, const WeightFunction& weight, double bound_m,
                                        Eigen::Index n, std::uint64_t seed);

}  // namespace scoreis
