#include "scoreis/datasets.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "scoreis/bessel.hpp"
#include "scoreis/rng.hpp"

namespace scoreis {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Each sample owns stream (seed, i), so generation can be sharded freely.
SampleBatch generate(Eigen::Index n, std::uint64_t seed, const char* name,
                     const std::function<Eigen::Vector2d(RngStream&)>& draw) {
  if (n < 1) throw ConfigError(std::string(name) + ": n must be at least 1");
  SampleBatch batch;
  batch.data.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    batch.data.row(i) = draw(rng).transpose();
  }
  batch.meta = {name, seed, "dataset"};
  return batch;
}

}  // namespace

RingMixture::RingMixture(std::vector<Ring> rings) : rings_(std::move(rings)) {
  if (rings_.empty()) throw ConfigError("RingMixture: no rings");
  double total = 0.0;
  for (const Ring& r : rings_) {
    if (!(r.weight > 0.0) || !(r.radius >= 0.0) || !(r.noise_std > 0.0))
      throw ConfigError("RingMixture: invalid ring parameters");
    total += r.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("RingMixture: weights must sum to 1");
}

RingMixture RingMixture::perturbed(double alpha_bar) const {
  std::vector<Ring> out;
  out.reserve(rings_.size());
  for (const Ring& r : rings_)
    out.push_back({r.weight, std::sqrt(alpha_bar) * r.radius,
                   std::sqrt(alpha_bar * r.noise_std * r.noise_std + (1.0 - alpha_bar))});
  return RingMixture(std::move(out));
}

// Ring density: exp(-(r^2 + a^2) / 2s^2) I0(a r / s^2) / (2 pi s^2).
double RingMixture::log_density(const Eigen::Vector2d& x, Eigen::Vector2d* grad) const {
  const double r = x.norm();
  double peak = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  double radial_sum = 0.0;  // gradient is radial_sum * x / total
  for (const Ring& ring : rings_) {
    const double s2 = ring.noise_std * ring.noise_std;
    const double z = ring.radius * r / s2;
    const double lt = std::log(ring.weight) - std::log(kTwoPi * s2) -
                      (r * r + ring.radius * ring.radius) / (2.0 * s2) + log_bessel_i0(z);
    // d/dx log I0(a r / s^2) = (a / s^2) (I1/I0)(z) x / r; the r -> 0 limit is a^2 x / (2 s^4).
    const double radial = (r > 1e-300 ? ring.radius / s2 * bessel_i1_over_i0(z) / r
                                      : ring.radius * ring.radius / (2.0 * s2 * s2)) -
                          1.0 / s2;
    if (lt > peak) {
      const double rescale = std::exp(peak - lt);
      total = total * rescale + 1.0;
      radial_sum = radial_sum * rescale + radial;
      peak = lt;
    } else {
      const double w = std::exp(lt - peak);
      total += w;
      radial_sum += w * radial;
    }
  }
  if (grad) *grad = (radial_sum / total) * x;
  return peak + std::log(total);
}

namespace spiral {

Eigen::Vector2d raw_point(double phi, double n1, double n2) {
  const double radius = 2.0 * phi + std::numbers::pi;
  return {radius * std::cos(phi) + n1, radius * std::sin(phi) + n2};
}

Eigen::Vector2d normalize(const Eigen::Vector2d& raw) {
  const double margin = kMarginStds * kNoiseStd;
  const double x_lo = kRawXMin - margin, x_hi = kRawXMax + margin;
  const double y_lo = kRawYMin - margin, y_hi = kRawYMax + margin;
  return {2.0 * (raw.x() - x_lo) / (x_hi - x_lo) - 1.0, 2.0 * (raw.y() - y_lo) / (y_hi - y_lo) - 1.0};
}

}  // namespace spiral

namespace pinwheel {

Eigen::Vector2d point(int arm, double radial, double angular) {
  const double angle = kTwoPi * arm / kArms + kSwirl * radial;
  const double c = std::cos(angle), s = std::sin(angle);
  return kScale * Eigen::Vector2d(c * radial - s * angular, s * radial + c * angular);
}

}  // namespace pinwheel

SampleBatch sample_spiral(Eigen::Index n, std::uint64_t seed) {
  return generate(n, seed, "spiral", [](RngStream& rng) {
    const double phi = kTwoPi * rng.uniform();
    const double n1 = spiral::kNoiseStd * rng.normal();
    const double n2 = spiral::kNoiseStd * rng.normal();
    return spiral::normalize(spiral::raw_point(phi, n1, n2));
  });
}

SampleBatch sample_8gaussians(Eigen::Index n, std::uint64_t seed) {
  return generate(n, seed, "8gaussians", [](RngStream& rng) {
    const int k = std::min(7, static_cast<int>(8.0 * rng.uniform()));
    const double angle = k * std::numbers::pi / 4.0;
    const double nx = rng.normal(), ny = rng.normal();
    return Eigen::Vector2d(eight_gaussians::kRadius * std::cos(angle) + eight_gaussians::kStd * nx,
                           eight_gaussians::kRadius * std::sin(angle) + eight_gaussians::kStd * ny);
  });
}

SampleBatch sample_circles(Eigen::Index n, std::uint64_t seed) {
  return generate(n, seed, "circles", [](RngStream& rng) {
    const double radius = rng.uniform() < 0.5 ? circles::kInnerRadius : circles::kOuterRadius;
    const double angle = kTwoPi * rng.uniform();
    const double nx = rng.normal(), ny = rng.normal();
    return Eigen::Vector2d(radius * std::cos(angle) + circles::kNoiseStd * nx,
                           radius * std::sin(angle) + circles::kNoiseStd * ny);
  });
}

SampleBatch sample_pinwheel(Eigen::Index n, std::uint64_t seed) {
  return generate(n, seed, "pinwheel", [](RngStream& rng) {
    const int arm = std::min(pinwheel::kArms - 1, static_cast<int>(pinwheel::kArms * rng.uniform()));
    const double radial = pinwheel::kRadialScale * (pinwheel::kRadialMean + pinwheel::kRadialStd * rng.normal());
    const double angular = pinwheel::kAngularStd * rng.normal();
    return pinwheel::point(arm, radial, angular);
  });
}

GaussianMixture mixture_8gaussians() {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(8, 1.0 / 8.0);
  Eigen::MatrixXd means(8, 2);
  std::vector<Eigen::MatrixXd> covs;
  for (int k = 0; k < 8; ++k) {
    const double angle = k * std::numbers::pi / 4.0;
    means.row(k) << eight_gaussians::kRadius * std::cos(angle), eight_gaussians::kRadius * std::sin(angle);
    covs.push_back(Eigen::MatrixXd::Identity(2, 2) * (eight_gaussians::kStd * eight_gaussians::kStd));
  }
  return GaussianMixture(std::move(w), std::move(means), std::move(covs));
}

GaussianMixture standard_normal_mixture(Eigen::Index dim) {
  return GaussianMixture(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Zero(1, dim), {Eigen::MatrixXd::Identity(dim, dim)});
}

RingMixture mixture_circles() {
  return RingMixture({{0.5, circles::kInnerRadius, circles::kNoiseStd}, {0.5, circles::kOuterRadius, circles::kNoiseStd}});
}

const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names{"spiral", "circles", "pinwheel", "8gaussians"};
  return names;
}

bool is_dataset_name(const std::string& name) {
  const auto& names = dataset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

SampleBatch sample_dataset(const std::string& name, Eigen::Index n, std::uint64_t seed) {
  if (name == "spiral") return sample_spiral(n, seed);
  if (name == "circles") return sample_circles(n, seed);
  if (name == "pinwheel") return sample_pinwheel(n, seed);
  if (name == "8gaussians") return sample_8gaussians(n, seed);
  throw ConfigError("unknown dataset '" + name + "' (expected spiral, circles, pinwheel or 8gaussians)");
}

void write_csv(const SampleBatch& batch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (Eigen::Index j = 0; j < batch.dim(); ++j) out << (j ? "," : "") << 'x' << j;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < batch.count(); ++i) {
    for (Eigen::Index j = 0; j < batch.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", batch.data(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

SampleBatch read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  const Eigen::Index dim = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (line.rfind("x0", 0) != 0) throw IoError("'" + path.string() + "': expected header x0,...");
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    Eigen::Index cols = 0;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || !std::isfinite(v))
        throw IoError("'" + path.string() + "' line " + std::to_string(row) + ": bad number '" + cell + "'");
      values.push_back(v);
      ++cols;
    }
    if (cols != dim)
      throw IoError("'" + path.string() + "' line " + std::to_string(row) + ": expected " + std::to_string(dim) +
                    " columns");
  }
  SampleBatch batch;
  const Eigen::Index n = static_cast<Eigen::Index>(values.size()) / dim;
  batch.data = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, dim);
  batch.meta = {path.filename().string(), 0, "file"};
  return batch;
}

}  // namespace scoreis
