#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scoreis/errors.hpp"

namespace scoreis {

struct SampleMeta {
  std::string source;
  std::uint64_t seed = 0;
  std::string sampler;
};

/// n x d samples, one per row.
struct SampleBatch {
  Eigen::MatrixXd data;
  SampleMeta meta;

  Eigen::Index count() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

/// Finite mixture of full-covariance Gaussians.
template <typename Scalar>
class GaussianMixtureT {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  GaussianMixtureT(Vector weights, Matrix means, std::vector<Matrix> covariances);

  Eigen::Index components() const { return weights_.size(); }
  Eigen::Index dim() const { return means_.cols(); }
  const Vector& weights() const { return weights_; }
  const Matrix& means() const { return means_; }
  const std::vector<Matrix>& covariances() const { return covariances_; }

  /// Mixture after forward diffusion with cumulative retention alpha_bar:
  /// components N(sqrt(ab) mu_k, ab Sigma_k + (1 - ab) I).
  GaussianMixtureT perturbed(Scalar alpha_bar) const;

  /// log density; if grad is non-null it receives the gradient of the log density.
  Scalar log_density(const Eigen::Ref<const Vector>& x, Vector* grad = nullptr) const;

 private:
  template <typename Work>
  Scalar log_density_impl(const Eigen::Ref<const Vector>& x, Vector* grad) const;

  Vector weights_;
  Matrix means_;
  std::vector<Matrix> covariances_;
  // Cached per component: precision matrix and log normalizer (log w_k - 0.5 log det(2 pi Sigma_k)).
  std::vector<Matrix> precisions_;
  Vector log_norm_;
};

using GaussianMixture = GaussianMixtureT<double>;

/// Mixture of 2-D rings: uniform angle, radius r_k, isotropic Gaussian blur of
/// standard deviation s_k. Closed under the VP forward diffusion.
class RingMixture {
 public:
  struct Ring {
    double weight;
    double radius;
    double noise_std;
  };

  explicit RingMixture(std::vector<Ring> rings);

  const std::vector<Ring>& rings() const { return rings_; }
  RingMixture perturbed(double alpha_bar) const;
  double log_density(const Eigen::Vector2d& x, Eigen::Vector2d* grad = nullptr) const;

 private:
  std::vector<Ring> rings_;
};

// Pinned dataset constants.
namespace spiral {
inline constexpr double kNoiseStd = 0.31622776601683794;  // sqrt(0.1)
inline constexpr double kMarginStds = 4.0;
// Extremes of the noiseless curve (2 phi + pi)(cos phi, sin phi), phi in [0, 2 pi].
inline constexpr double kRawXMin = -9.6289397794245373;
inline constexpr double kRawXMax = 5.0 * std::numbers::pi;
inline constexpr double kRawYMin = -12.722007889667707;
inline constexpr double kRawYMax = 6.5767427911817930;
/// Per-coordinate affine map of [raw_min - 4 sigma, raw_max + 4 sigma] onto [-1, 1].
Eigen::Vector2d normalize(const Eigen::Vector2d& raw);
Eigen::Vector2d raw_point(double phi, double n1, double n2);
}  // namespace spiral

namespace eight_gaussians {
inline constexpr double kRadius = 0.8;
inline constexpr double kStd = 0.05;
}  // namespace eight_gaussians

namespace circles {
inline constexpr double kInnerRadius = 0.4;
inline constexpr double kOuterRadius = 0.8;
inline constexpr double kNoiseStd = 0.025;
}  // namespace circles

namespace pinwheel {
inline constexpr int kArms = 5;
inline constexpr double kRadialMean = 1.0;
inline constexpr double kRadialStd = 0.3;
inline constexpr double kRadialScale = 0.3;
inline constexpr double kAngularStd = 0.05;
inline constexpr double kSwirl = 3.0;
// Radial feature at +4 standard deviations.
inline constexpr double kDesignRadius = kRadialScale * (kRadialMean + 4.0 * kRadialStd);
inline constexpr double kScale = 0.9 / kDesignRadius;
Eigen::Vector2d point(int arm, double radial, double angular);
}  // namespace pinwheel

SampleBatch sample_spiral(Eigen::Index n, std::uint64_t seed);
SampleBatch sample_8gaussians(Eigen::Index n, std::uint64_t seed);
SampleBatch sample_circles(Eigen::Index n, std::uint64_t seed);
SampleBatch sample_pinwheel(Eigen::Index n, std::uint64_t seed);

GaussianMixture mixture_8gaussians();
GaussianMixture standard_normal_mixture(Eigen::Index dim);
RingMixture mixture_circles();

/// Dispatch by name: spiral | circles | pinwheel | 8gaussians.
SampleBatch sample_dataset(const std::string& name, Eigen::Index n, std::uint64_t seed);
bool is_dataset_name(const std::string& name);
const std::vector<std::string>& dataset_names();

/// CSV with header x0,...,x{d-1}; values printed with 17 significant digits.
void write_csv(const SampleBatch& batch, const std::filesystem::path& path);
SampleBatch read_csv(const std::filesystem::path& path);

// ---- template implementation ----

template <typename Scalar>
GaussianMixtureT<Scalar>::GaussianMixtureT(Vector weights, Matrix means, std::vector<Matrix> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const Eigen::Index k = weights_.size();
  if (k == 0 || means_.rows() != k || static_cast<Eigen::Index>(covariances_.size()) != k)
    throw ConfigError("GaussianMixture: component counts disagree");
  if ((weights_.array() <= 0).any()) throw ConfigError("GaussianMixture: weights must be positive");
  if (std::abs(weights_.sum() - Scalar(1)) > Scalar(1e-12)) throw ConfigError("GaussianMixture: weights must sum to 1");
  const Eigen::Index d = means_.cols();
  precisions_.reserve(covariances_.size());
  log_norm_.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Matrix& cov = covariances_[static_cast<std::size_t>(i)];
    if (cov.rows() != d || cov.cols() != d) throw ConfigError("GaussianMixture: covariance has wrong shape");
    if (!cov.isApprox(cov.transpose())) throw ConfigError("GaussianMixture: covariance is not symmetric");
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("GaussianMixture: covariance is not positive definite");
    const Scalar log_det = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    precisions_.push_back(llt.solve(Matrix::Identity(d, d)));
    log_norm_(i) = std::log(weights_(i)) - Scalar(0.5) * (log_det + Scalar(d) * std::log(2 * std::numbers::pi_v<Scalar>));
  }
}

template <typename Scalar>
GaussianMixtureT<Scalar> GaussianMixtureT<Scalar>::perturbed(Scalar alpha_bar) const {
  const Eigen::Index d = dim();
  std::vector<Matrix> covs;
  covs.reserve(covariances_.size());
  // I + ab (Sigma - I) equals ab Sigma + (1 - ab) I and keeps Sigma = I exact.
  for (const Matrix& c : covariances_) covs.push_back(Matrix::Identity(d, d) + alpha_bar * (c - Matrix::Identity(d, d)));
  return GaussianMixtureT(weights_, std::sqrt(alpha_bar) * means_, std::move(covs));
}

template <typename Scalar>
template <typename Work>
Scalar GaussianMixtureT<Scalar>::log_density_impl(const Eigen::Ref<const Vector>& x, Vector* grad) const {
  // Streaming log-sum-exp over components, rescaling the running sums
  // whenever a larger log term appears.
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  Scalar total = 0;
  Work g = Work::Zero(x.size());
  Work diff(x.size());
  Work pd(x.size());
  for (Eigen::Index i = 0; i < components(); ++i) {
    diff = x - means_.row(i).transpose();
    pd.noalias() = precisions_[static_cast<std::size_t>(i)] * diff;
    const Scalar lt = log_norm_(i) - Scalar(0.5) * diff.dot(pd);
    if (lt > peak) {
      const Scalar rescale = std::exp(peak - lt);
      total = total * rescale + 1;
      g = g * rescale - pd;
      peak = lt;
    } else {
      const Scalar w = std::exp(lt - peak);
      total += w;
      g -= w * pd;
    }
  }
  if (grad) *grad = g / total;
  return peak + std::log(total);
}

template <typename Scalar>
Scalar GaussianMixtureT<Scalar>::log_density(const Eigen::Ref<const Vector>& x, Vector* grad) const {
  if (x.size() != dim()) throw ContractViolation("GaussianMixture: point has wrong dimension");
  if (x.size() <= 8) return log_density_impl<Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, 8, 1>>(x, grad);
  return log_density_impl<Vector>(x, grad);
}

}  // namespace scoreis
