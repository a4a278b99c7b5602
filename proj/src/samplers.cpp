#include "scoreis/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "scoreis/rng.hpp"

namespace scoreis {

namespace {

constexpr Eigen::Index kChainBlock = 256;

// One update for rows of x (or a single column vector); noise is skipped at t = 1.
template <typename DerivedX, typename DerivedQ, typename DerivedZ>
Eigen::MatrixXd step_update(StepVariant variant, const Eigen::MatrixBase<DerivedX>& x,
                            const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedZ>& z, double beta,
                            int t) {
  if (!(beta > 0.0 && beta < 1.0)) throw NumericalError("step: beta must lie in (0, 1)");
  Eigen::MatrixXd next;
  if (variant == StepVariant::Ancestral)
    next = (x + beta * q) / std::sqrt(1.0 - beta);
  else
    next = x + (0.5 * beta) * x + beta * q;
  if (t > 1) next += std::sqrt(beta) * z;
  return next;
}

void check_step(int t, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps()) throw ContractViolation("step index must lie in 1..T");
}

}  // namespace

std::string to_string(StepVariant v) { return v == StepVariant::Ancestral ? "ancestral" : "em"; }

StepVariant parse_step_variant(const std::string& name) {
  if (name == "ancestral") return StepVariant::Ancestral;
  if (name == "em" || name == "euler_maruyama") return StepVariant::EulerMaruyama;
  throw ConfigError("unknown sampler variant '" + name + "' (expected ancestral or em)");
}

Eigen::VectorXd ancestral_step(const Eigen::VectorXd& q_score, const NoiseSchedule& schedule,
                               const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& z) {
  check_step(t, schedule);
  return step_update(StepVariant::Ancestral, x_t, q_score, z, schedule.beta(t), t);
}

Eigen::VectorXd euler_maruyama_step(const Eigen::VectorXd& q_score, const NoiseSchedule& schedule,
                                    const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& z) {
  check_step(t, schedule);
  return step_update(StepVariant::EulerMaruyama, x_t, q_score, z, schedule.beta(t), t);
}

Eigen::VectorXd tweedie_mean(const ScoreFunction& score, const NoiseSchedule& schedule, const Eigen::VectorXd& x,
                             int t) {
  check_step(t, schedule);
  const double ab = schedule.alpha_bar(t);
  if (!(ab > 0.0)) throw ConfigError("tweedie_mean: alpha_bar must be positive");
  return tweedie_mean_from_score(x, score.score(x, t), ab);
}

IssgmBatch issgm_score_batch(const ScoreFunction& score, const WeightFunction& weight, const NoiseSchedule& schedule,
                             const Eigen::MatrixXd& points, int t, double epsilon) {
  check_step(t, schedule);
  if (!(epsilon > 0.0)) throw ConfigError("issgm: epsilon must be positive");
  const double ab = schedule.alpha_bar(t);
  if (!(ab > 0.0)) throw ConfigError("issgm: alpha_bar must be positive");

  IssgmBatch out;
  out.base_score = score.score_batch(points, t);
  out.mean = tweedie_mean_from_score(points, out.base_score, ab);
  out.delta = weight.grad_log_l_batch(out.mean);
  const Eigen::MatrixXd probes = points + epsilon * out.delta;
  // Displacement actually realized in floating point, so the first-order term
  // and the finite-difference correction see the same step.
  const Eigen::MatrixXd realized = (probes - points) / epsilon;
  const Eigen::MatrixXd probe_score = score.score_batch(probes, t);
  out.q_score = issgm_combine(out.base_score, probe_score, realized, ab, epsilon);
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    if ((out.delta.row(i).array() == 0.0).all()) out.q_score.row(i) = out.base_score.row(i);
  return out;
}

Eigen::VectorXd issgm_score(const ScoreFunction& score, const WeightFunction& weight, const NoiseSchedule& schedule,
                            const Eigen::VectorXd& x, int t, double epsilon) {
  const IssgmBatch b = issgm_score_batch(score, weight, schedule, x.transpose(), t, epsilon);
  if (!b.q_score.allFinite() || !b.mean.allFinite() || !b.delta.allFinite()) {
    std::ostringstream os;
    os << "issgm_score: non-finite intermediate at t=" << t << ", |x|=" << x.norm()
       << ", |delta|=" << b.delta.norm();
    throw NumericalError(os.str());
  }
  return b.q_score.row(0).transpose();
}

namespace {

struct BlockOutput {
  Eigen::MatrixXd final_states;
  std::vector<int> failed_step;  // 0 = success
  std::vector<Trajectory> trajectories;
};

BlockOutput run_block(const ScoreFunction& score, const WeightFunction* weight, const NoiseSchedule& schedule,
                      const SamplerConfig& config, Eigen::Index first, Eigen::Index count) {
  const Eigen::Index d = score.dim();
  const int steps = schedule.steps();
  std::vector<RngStream> rngs;
  rngs.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) rngs.emplace_back(config.seed, static_cast<std::uint64_t>(first + i));

  Eigen::MatrixXd x(count, d);
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rngs[static_cast<std::size_t>(i)].normal();

  BlockOutput out;
  out.failed_step.assign(static_cast<std::size_t>(count), 0);
  const Eigen::Index traced = std::clamp<Eigen::Index>(config.trace_chains - first, 0, count);
  for (Eigen::Index i = 0; i < traced; ++i) {
    Trajectory tr;
    tr.chain = first + i;
    tr.states.resize(steps + 1, d);
    tr.tweedie_means.resize(steps + 1, d);
    tr.grad_log_l_norm.resize(steps + 1);
    tr.correction_norm.resize(steps + 1);
    out.trajectories.push_back(std::move(tr));
  }

  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(count, d);
  for (int t = steps; t >= 1; --t) {
    if (t > 1) {
      for (Eigen::Index i = 0; i < count; ++i)
        for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rngs[static_cast<std::size_t>(i)].normal();
    }
    Eigen::MatrixXd q;
    Eigen::MatrixXd base;
    Eigen::MatrixXd mean;
    Eigen::MatrixXd delta;
    if (weight) {
      IssgmBatch b = issgm_score_batch(score, *weight, schedule, x, t, config.epsilon);
      q = std::move(b.q_score);
      base = std::move(b.base_score);
      mean = std::move(b.mean);
      delta = std::move(b.delta);
    } else {
      q = score.score_batch(x, t);
    }

    const int row = steps - t;
    for (Eigen::Index i = 0; i < traced; ++i) {
      Trajectory& tr = out.trajectories[static_cast<std::size_t>(i)];
      tr.t.push_back(t);
      tr.states.row(row) = x.row(i);
      if (weight) {
        tr.tweedie_means.row(row) = mean.row(i);
        tr.grad_log_l_norm(row) = delta.row(i).norm();
        tr.correction_norm(row) = (q.row(i) - base.row(i)).norm();
      } else {
        tr.tweedie_means.row(row) =
            tweedie_mean_from_score(x.row(i), q.row(i), schedule.alpha_bar(t));
        tr.grad_log_l_norm(row) = 0.0;
        tr.correction_norm(row) = 0.0;
      }
    }

    x = step_update(config.variant, x, q, z, schedule.beta(t), t);
    for (Eigen::Index i = 0; i < count; ++i) {
      auto& failed = out.failed_step[static_cast<std::size_t>(i)];
      if (failed == 0 && !x.row(i).allFinite()) failed = t;
      if (failed != 0) x.row(i).setZero();
    }
  }

  for (Eigen::Index i = 0; i < traced; ++i) {
    Trajectory& tr = out.trajectories[static_cast<std::size_t>(i)];
    tr.t.push_back(0);
    tr.states.row(steps) = x.row(i);
    tr.tweedie_means.row(steps) = x.row(i);
    tr.grad_log_l_norm(steps) = 0.0;
    tr.correction_norm(steps) = 0.0;
  }
  out.final_states = std::move(x);
  return out;
}

}  // namespace

SamplerResult run_sampler(const ScoreFunction& score, const WeightFunction* weight, const NoiseSchedule& schedule,
                          const SamplerConfig& config) {
  if (config.n_samples < 1) throw ConfigError("sampler: n_samples must be at least 1");
  if (!(config.epsilon > 0.0)) throw ConfigError("sampler: epsilon must be positive");

  const Eigen::Index n = config.n_samples;
  const Eigen::Index blocks = (n + kChainBlock - 1) / kChainBlock;
  std::vector<BlockOutput> outputs(static_cast<std::size_t>(blocks));

  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<Eigen::Index>(threads, blocks));
  std::atomic<Eigen::Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const Eigen::Index b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        const Eigen::Index first = b * kChainBlock;
        outputs[static_cast<std::size_t>(b)] =
            run_block(score, weight, schedule, config, first, std::min(kChainBlock, n - first));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = blocks;
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  SamplerResult result;
  Eigen::Index ok = 0;
  for (const auto& o : outputs)
    for (int f : o.failed_step) ok += (f == 0);
  result.batch.data.resize(ok, score.dim());
  Eigen::Index row = 0;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    auto& o = outputs[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < o.failed_step.size(); ++i) {
      if (o.failed_step[i] == 0)
        result.batch.data.row(row++) = o.final_states.row(static_cast<Eigen::Index>(i));
      else
        result.failures.push_back({b * kChainBlock + static_cast<Eigen::Index>(i), o.failed_step[i]});
    }
    for (auto& tr : o.trajectories) result.trajectories.push_back(std::move(tr));
  }
  result.batch.meta = {"diffusion", config.seed, weight ? "issgm_" + to_string(config.variant) : to_string(config.variant)};
  return result;
}

AcceptRejectResult accept_reject_sample(const BaseSampler& base, const WeightValue& weight, double bound_m,
                                        Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("accept_reject: n must be at least 1");
  if (!(bound_m > 0.0) || !std::isfinite(bound_m)) throw ConfigError("accept_reject: bound M must be positive");
  constexpr std::uint64_t kMinProposalsForAbort = 1'000'000;
  constexpr double kMinRate = 1e-4;

  AcceptRejectResult res;
  std::vector<Eigen::VectorXd> accepted;
  accepted.reserve(static_cast<std::size_t>(n));
  std::string source;
  Eigen::Index dim = 0;
  for (std::uint64_t round = 0; static_cast<Eigen::Index>(accepted.size()) < n; ++round) {
    const Eigen::Index want = n - static_cast<Eigen::Index>(accepted.size());
    const Eigen::Index chunk = std::max<Eigen::Index>(1024, 2 * want);
    const SampleBatch proposals = base(chunk, derive_seed(seed, round));
    source = proposals.meta.source;
    dim = proposals.dim();
    RngStream uniforms(seed, round);
    for (Eigen::Index i = 0; i < proposals.count() && static_cast<Eigen::Index>(accepted.size()) < n; ++i) {
      const Eigen::VectorXd x = proposals.data.row(i).transpose();
      const double l = weight(x);
      const double u = uniforms.uniform();
      ++res.proposals;
      res.max_weight_seen = std::max(res.max_weight_seen, l);
      if (l > bound_m) ++res.bound_violations;
      const double accept_prob = std::min(1.0, l / bound_m);
      if (u <= accept_prob) accepted.push_back(x);
    }
    if (res.proposals >= kMinProposalsForAbort) {
      const double rate = static_cast<double>(accepted.size()) / static_cast<double>(res.proposals);
      if (rate < kMinRate) {
        std::ostringstream os;
        os << "accept_reject: acceptance rate " << rate << " after " << res.proposals
           << " proposals (bound M too loose or weight pathological)";
        throw NumericalError(os.str());
      }
    }
  }
  res.batch.data.resize(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) res.batch.data.row(i) = accepted[static_cast<std::size_t>(i)].transpose();
  res.batch.meta = {source, seed, "accept_reject"};
  res.acceptance_rate = static_cast<double>(n) / static_cast<double>(res.proposals);
  return res;
}

AcceptRejectResult accept_reject_sample(const BaseSampler& base, const WeightFunction& weight, double bound_m,
                                        Eigen::Index n, std::uint64_t seed) {
  return accept_reject_sample(
      base, [&weight](const Eigen::VectorXd& x) { return std::exp(weight.log_l(x)); }, bound_m, n, seed);
}

}  // namespace scoreis
