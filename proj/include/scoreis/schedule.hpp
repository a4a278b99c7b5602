#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "scoreis/errors.hpp"

namespace scoreis {

/// Discrete variance-preserving noise schedule.
///
/// beta is indexed 1..T (slot 0 unused and set to 0), alpha_bar 0..T with
/// alpha_bar[0] = 1 and alpha_bar[t] = prod_{s<=t} (1 - beta[s]).
template <typename Scalar>
class NoiseScheduleT {
 public:
  NoiseScheduleT(int steps, Scalar eps_d, std::vector<Scalar> beta_1_to_T);

  int steps() const { return steps_; }
  Scalar eps_d() const { return eps_d_; }

  Scalar alpha_bar(int t) const {
    if (t < 0 || t > steps_) throw ContractViolation("alpha_bar: step index out of range");
    return alpha_bar_[static_cast<std::size_t>(t)];
  }
  Scalar beta(int t) const {
    if (t < 1 || t > steps_) throw ContractViolation("beta: step index out of range");
    return beta_[static_cast<std::size_t>(t)];
  }

  /// beta[1..T], for serialization.
  std::vector<Scalar> betas() const { return {beta_.begin() + 1, beta_.end()}; }

 private:
  int steps_;
  Scalar eps_d_;
  std::vector<Scalar> beta_;
  std::vector<Scalar> alpha_bar_;
};

using NoiseSchedule = NoiseScheduleT<double>;

inline constexpr double kDefaultEpsD = 0.008;
inline constexpr double kBetaFloor = 1e-12;
inline constexpr double kBetaCeiling = 0.999;

/// Cosine decay f_d(tau) = cos^2(pi/2 * (tau + eps_d) / (1 + eps_d)).
template <typename Scalar>
Scalar cosine_decay(Scalar tau, Scalar eps_d) {
  const Scalar c = std::cos(std::numbers::pi_v<Scalar> / 2 * (tau + eps_d) / (1 + eps_d));
  return c * c;
}

/// beta_t = clamp(1 - f_d(tau_{t+1}) / f_d(tau_t), 1e-12, 0.999) with tau_t = t / T.
template <typename Scalar = double>
NoiseScheduleT<Scalar> build_cosine_schedule(int steps, Scalar eps_d = Scalar(kDefaultEpsD)) {
  if (steps < 2) throw ConfigError("cosine schedule: T must be at least 2");
  if (!(eps_d > 0)) throw ConfigError("cosine schedule: eps_d must be positive");
  std::vector<Scalar> beta(static_cast<std::size_t>(steps));
  const Scalar n = static_cast<Scalar>(steps);
  for (int t = 1; t <= steps; ++t) {
    const Scalar ratio = cosine_decay(Scalar(t + 1) / n, eps_d) / cosine_decay(Scalar(t) / n, eps_d);
    beta[static_cast<std::size_t>(t - 1)] = std::clamp(1 - ratio, Scalar(kBetaFloor), Scalar(kBetaCeiling));
  }
  return NoiseScheduleT<Scalar>(steps, eps_d, std::move(beta));
}

template <typename Scalar>
NoiseScheduleT<Scalar>::NoiseScheduleT(int steps, Scalar eps_d, std::vector<Scalar> beta_1_to_T)
    : steps_(steps), eps_d_(eps_d) {
  if (steps < 2) throw ConfigError("noise schedule: T must be at least 2");
  if (beta_1_to_T.size() != static_cast<std::size_t>(steps))
    throw ConfigError("noise schedule: expected " + std::to_string(steps) + " beta values");
  beta_.reserve(beta_1_to_T.size() + 1);
  beta_.push_back(Scalar(0));
  alpha_bar_.reserve(beta_1_to_T.size() + 1);
  alpha_bar_.push_back(Scalar(1));
  for (Scalar b : beta_1_to_T) {
    if (!(b > 0 && b < 1)) throw ConfigError("noise schedule: beta must lie in (0, 1)");
    beta_.push_back(b);
    alpha_bar_.push_back(alpha_bar_.back() * (1 - b));
  }
}

}  // namespace scoreis
