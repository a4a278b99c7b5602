#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scoreis/autodiff.hpp"

namespace scoreis {

inline constexpr double kDefaultWeightFloor = 1e-4;

/// Positive importance weight l(x) >= m, exposed through log l and grad log l.
///
/// Where the floor is active the weight is the constant m and the gradient is
/// exactly zero. floor_m() == 0 marks weights that are positive by
/// construction and have no floor.
class WeightFunction {
 public:
  virtual ~WeightFunction() = default;

  virtual std::string name() const = 0;
  virtual double floor_m() const = 0;
  virtual double log_l(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd grad_log_l(const Eigen::VectorXd& x) const = 0;
  virtual bool floor_active(const Eigen::VectorXd& x) const = 0;

  /// One point per row.
  virtual Eigen::MatrixXd grad_log_l_batch(const Eigen::MatrixXd& points) const;
  Eigen::VectorXd log_l_batch(const Eigen::MatrixXd& points) const;
};

using WeightPtr = std::shared_ptr<const WeightFunction>;

/// l(x) = max(||x||^2, m).
WeightPtr make_norm_squared(double floor_m = kDefaultWeightFloor);
/// l(x) = max(sum_i x_i + 2, m).
WeightPtr make_element_sum(double floor_m = kDefaultWeightFloor);
/// l(x) = exp(a.x + b); a = 0 gives the constant weight.
WeightPtr make_exp_linear(Eigen::VectorXd a, double b);
/// l(x) = max(sigmoid(w.x + c), m).
WeightPtr make_logistic_classifier(Eigen::VectorXd w, double c, double floor_m = kDefaultWeightFloor);

/// Builds l(x) (a positive scalar node) from a leaf holding x.
using WeightBuilder = std::function<ad::NodeId(ad::Tape&, ad::NodeId)>;

/// Arbitrary composed weight; the gradient comes from one reverse pass over
/// log l on a fresh tape.
WeightPtr make_autodiff_weight(std::string name, WeightBuilder builder, double floor_m = kDefaultWeightFloor);

/// Parse `norm_sq`, `elem_sum`, `exp_linear:a0,...,b` or `logistic:w0,...,c`.
/// The numeric list must hold dim + 1 values.
WeightPtr parse_weight_spec(const std::string& spec, Eigen::Index dim, double floor_m = kDefaultWeightFloor);
const std::vector<std::string>& weight_spec_forms();

/// Largest |grad_log_l - central difference of log_l| / max(1, |grad_log_l|)
/// over the points (rows) where the floor is inactive at x and at x +- h e_i.
double check_weight_gradient(const WeightFunction& wf, const Eigen::MatrixXd& points, double h = 1e-6);

}  // namespace scoreis
