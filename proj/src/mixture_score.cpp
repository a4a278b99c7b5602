#include "scoreis/score_models.hpp"

namespace scoreis {

Eigen::VectorXd ScoreFunction::score(const Eigen::VectorXd& x, int t) const {
  if (x.size() != dim()) throw ContractViolation("score: point has wrong dimension");
  return score_batch(x.transpose(), t).row(0).transpose();
}

MixtureScore::MixtureScore(GaussianMixture base, const NoiseSchedule& schedule) : base_(std::move(base)) {
  per_step_.reserve(static_cast<std::size_t>(schedule.steps()) + 1);
  for (int t = 0; t <= schedule.steps(); ++t) per_step_.push_back(base_.perturbed(schedule.alpha_bar(t)));
}

Eigen::MatrixXd MixtureScore::score_batch(const Eigen::MatrixXd& points, int t) const {
  if (t < 0 || t >= static_cast<int>(per_step_.size())) throw ContractViolation("MixtureScore: step out of range");
  if (points.cols() != dim()) throw ContractViolation("MixtureScore: points have wrong dimension");
  const GaussianMixture& gm = per_step_[static_cast<std::size_t>(t)];
  Eigen::MatrixXd out(points.rows(), points.cols());
  Eigen::VectorXd grad;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    gm.log_density(points.row(i).transpose(), &grad);
    out.row(i) = grad.transpose();
  }
  return out;
}

RingScore::RingScore(RingMixture base, const NoiseSchedule& schedule) : base_(std::move(base)) {
  per_step_.reserve(static_cast<std::size_t>(schedule.steps()) + 1);
  for (int t = 0; t <= schedule.steps(); ++t) per_step_.push_back(base_.perturbed(schedule.alpha_bar(t)));
}

Eigen::MatrixXd RingScore::score_batch(const Eigen::MatrixXd& points, int t) const {
  if (t < 0 || t >= static_cast<int>(per_step_.size())) throw ContractViolation("RingScore: step out of range");
  if (points.cols() != 2) throw ContractViolation("RingScore: points must be 2-D");
  const RingMixture& rm = per_step_[static_cast<std::size_t>(t)];
  Eigen::MatrixXd out(points.rows(), 2);
  Eigen::Vector2d grad;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    rm.log_density(points.row(i).transpose(), &grad);
    out.row(i) = grad.transpose();
  }
  return out;
}

Eigen::VectorXd mixture_perturbed_score(const GaussianMixture& gm, const NoiseSchedule& schedule, int t,
                                        const Eigen::VectorXd& x) {
  Eigen::VectorXd grad;
  gm.perturbed(schedule.alpha_bar(t)).log_density(x, &grad);
  if (!grad.allFinite()) throw NumericalError("mixture_perturbed_score: non-finite score");
  return grad;
}

}  // namespace scoreis
