#include "scoreis/weights.hpp"

#include <cmath>
#include <sstream>

#include "scoreis/errors.hpp"

namespace scoreis {

Eigen::MatrixXd WeightFunction::grad_log_l_batch(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd out(points.rows(), points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out.row(i) = grad_log_l(points.row(i).transpose()).transpose();
  return out;
}

Eigen::VectorXd WeightFunction::log_l_batch(const Eigen::MatrixXd& points) const {
  Eigen::VectorXd out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = log_l(points.row(i).transpose());
  return out;
}

namespace {

void require_floor(double m) {
  if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("weight floor m must be positive and finite");
}

class NormSquared final : public WeightFunction {
 public:
  explicit NormSquared(double m) : m_(m) { require_floor(m); }
  std::string name() const override { return "norm_sq"; }
  double floor_m() const override { return m_; }
  bool floor_active(const Eigen::VectorXd& x) const override { return x.squaredNorm() <= m_; }
  double log_l(const Eigen::VectorXd& x) const override { return std::log(std::max(x.squaredNorm(), m_)); }
  Eigen::VectorXd grad_log_l(const Eigen::VectorXd& x) const override {
    const double s = x.squaredNorm();
    if (s <= m_) return Eigen::VectorXd::Zero(x.size());
    return 2.0 * x / s;
  }

 private:
  double m_;
};

class ElementSum final : public WeightFunction {
 public:
  explicit ElementSum(double m) : m_(m) { require_floor(m); }
  std::string name() const override { return "elem_sum"; }
  double floor_m() const override { return m_; }
  bool floor_active(const Eigen::VectorXd& x) const override { return x.sum() + 2.0 <= m_; }
  double log_l(const Eigen::VectorXd& x) const override { return std::log(std::max(x.sum() + 2.0, m_)); }
  Eigen::VectorXd grad_log_l(const Eigen::VectorXd& x) const override {
    const double s = x.sum() + 2.0;
    if (s <= m_) return Eigen::VectorXd::Zero(x.size());
    return Eigen::VectorXd::Constant(x.size(), 1.0 / s);
  }

 private:
  double m_;
};

class ExpLinear final : public WeightFunction {
 public:
  ExpLinear(Eigen::VectorXd a, double b) : a_(std::move(a)), b_(b) {
    if (a_.size() == 0 || !a_.allFinite() || !std::isfinite(b_)) throw ConfigError("exp_linear: bad coefficients");
  }
  std::string name() const override { return "exp_linear"; }
  double floor_m() const override { return 0.0; }
  bool floor_active(const Eigen::VectorXd&) const override { return false; }
  double log_l(const Eigen::VectorXd& x) const override { return a_.dot(x) + b_; }
  Eigen::VectorXd grad_log_l(const Eigen::VectorXd& x) const override {
    if (x.size() != a_.size()) throw ContractViolation("exp_linear: dimension mismatch");
    return a_;
  }
  Eigen::MatrixXd grad_log_l_batch(const Eigen::MatrixXd& points) const override {
    if (points.cols() != a_.size()) throw ContractViolation("exp_linear: dimension mismatch");
    return a_.transpose().replicate(points.rows(), 1);
  }

 private:
  Eigen::VectorXd a_;
  double b_;
};

// log sigmoid(z) = -log(1 + e^{-z}), evaluated without overflow.
double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

class Logistic final : public WeightFunction {
 public:
  Logistic(Eigen::VectorXd w, double c, double m) : w_(std::move(w)), c_(c), m_(m), log_m_(std::log(m)) {
    require_floor(m);
    if (w_.size() == 0 || !w_.allFinite() || !std::isfinite(c_)) throw ConfigError("logistic: bad coefficients");
  }
  std::string name() const override { return "logistic"; }
  double floor_m() const override { return m_; }
  bool floor_active(const Eigen::VectorXd& x) const override { return log_sigmoid(w_.dot(x) + c_) <= log_m_; }
  double log_l(const Eigen::VectorXd& x) const override { return std::max(log_sigmoid(w_.dot(x) + c_), log_m_); }
  Eigen::VectorXd grad_log_l(const Eigen::VectorXd& x) const override {
    const double z = w_.dot(x) + c_;
    if (log_sigmoid(z) <= log_m_) return Eigen::VectorXd::Zero(x.size());
    // 1 - sigmoid(z) = sigmoid(-z)
    return std::exp(log_sigmoid(-z)) * w_;
  }

 private:
  Eigen::VectorXd w_;
  double c_;
  double m_;
  double log_m_;
};

class AutodiffWeight final : public WeightFunction {
 public:
  AutodiffWeight(std::string name, WeightBuilder builder, double m)
      : name_(std::move(name)), builder_(std::move(builder)), m_(m) {
    require_floor(m);
  }
  std::string name() const override { return name_; }
  double floor_m() const override { return m_; }
  bool floor_active(const Eigen::VectorXd& x) const override { return weight(x) <= m_; }
  double log_l(const Eigen::VectorXd& x) const override { return std::log(std::max(weight(x), m_)); }
  Eigen::VectorXd grad_log_l(const Eigen::VectorXd& x) const override {
    ad::Tape tape;
    const ad::NodeId in = tape.leaf(ad::Tensor::vector(x));
    const ad::NodeId l = builder_(tape, in);
    if (tape.value(l).item() <= m_) return Eigen::VectorXd::Zero(x.size());
    const ad::NodeId log_l = tape.log(l);
    return tape.backward(log_l)[in].as_vector();
  }

 private:
  double weight(const Eigen::VectorXd& x) const {
    ad::Tape tape;
    return tape.value(builder_(tape, tape.leaf(ad::Tensor::vector(x)))).item();
  }

  std::string name_;
  WeightBuilder builder_;
  double m_;
};

// Comma-separated finite numbers; on failure `bad` holds the offending cell.
bool parse_numbers(const std::string& list, std::vector<double>& out, std::string& bad) {
  std::istringstream in(list);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0' || !std::isfinite(v)) {
      bad = cell;
      return false;
    }
    out.push_back(v);
  }
  return true;
}

}  // namespace

WeightPtr make_norm_squared(double floor_m) { return std::make_shared<NormSquared>(floor_m); }
WeightPtr make_element_sum(double floor_m) { return std::make_shared<ElementSum>(floor_m); }
WeightPtr make_exp_linear(Eigen::VectorXd a, double b) { return std::make_shared<ExpLinear>(std::move(a), b); }
WeightPtr make_logistic_classifier(Eigen::VectorXd w, double c, double floor_m) {
  return std::make_shared<Logistic>(std::move(w), c, floor_m);
}
WeightPtr make_autodiff_weight(std::string name, WeightBuilder builder, double floor_m) {
  return std::make_shared<AutodiffWeight>(std::move(name), std::move(builder), floor_m);
}

const std::vector<std::string>& weight_spec_forms() {
  static const std::vector<std::string> forms{"norm_sq", "elem_sum", "exp_linear:a0,...,a{d-1},b",
                                              "logistic:w0,...,w{d-1},c"};
  return forms;
}

WeightPtr parse_weight_spec(const std::string& spec, Eigen::Index dim, double floor_m) {
  auto invalid = [&](const std::string& why) {
    std::string msg = "invalid weight spec '" + spec + "': " + why + "; valid forms:";
    for (const auto& f : weight_spec_forms()) msg += " " + f;
    return ConfigError(msg);
  };
  if (spec == "norm_sq") return make_norm_squared(floor_m);
  if (spec == "elem_sum") return make_element_sum(floor_m);
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw invalid("unknown name");
  const std::string kind = spec.substr(0, colon);
  if (kind != "exp_linear" && kind != "logistic") throw invalid("unknown name");
  std::vector<double> nums;
  std::string bad;
  if (!parse_numbers(spec.substr(colon + 1), nums, bad)) throw invalid("bad number '" + bad + "'");
  if (static_cast<Eigen::Index>(nums.size()) != dim + 1)
    throw invalid("expected " + std::to_string(dim + 1) + " numbers");
  const Eigen::VectorXd coef = Eigen::Map<const Eigen::VectorXd>(nums.data(), dim);
  if (kind == "exp_linear") return make_exp_linear(coef, nums.back());
  return make_logistic_classifier(coef, nums.back(), floor_m);
}

double check_weight_gradient(const WeightFunction& wf, const Eigen::MatrixXd& points, double h) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    const Eigen::VectorXd x = points.row(r).transpose();
    if (wf.floor_active(x)) continue;
    const Eigen::VectorXd g = wf.grad_log_l(x);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd up = x, down = x;
      up(i) += h;
      down(i) -= h;
      if (wf.floor_active(up) || wf.floor_active(down)) continue;
      const double fd = (wf.log_l(up) - wf.log_l(down)) / (2.0 * h);
      const double err = std::abs(g(i) - fd) / std::max(1.0, std::abs(g(i)));
      if (!std::isfinite(err)) return err;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace scoreis
