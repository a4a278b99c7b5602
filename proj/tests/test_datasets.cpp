#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scoreis/bessel.hpp"
#include "scoreis/datasets.hpp"
#include "scoreis/evaluation.hpp"
#include "scoreis/rng.hpp"

using namespace scoreis;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "scoreis_unit";
  fs::create_directories(dir);
  return dir / name;
}

template <typename Density>
double fd_grad_error(const Density& logp, const Eigen::Vector2d& x, const Eigen::Vector2d& grad) {
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d hi = x, lo = x;
    hi(i) += h;
    lo(i) -= h;
    const double fd = (logp(hi) - logp(lo)) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1.0, std::abs(grad(i))));
  }
  return worst;
}

}  // namespace

TEST_SUITE("datasets") {
  TEST_CASE("generators are deterministic and bounded") {
    for (const auto& name : dataset_names()) {
      CAPTURE(name);
      const SampleBatch a = sample_dataset(name, 100000, 11);
      const SampleBatch b = sample_dataset(name, 100000, 11);
      const SampleBatch c = sample_dataset(name, 100000, 12);
      CHECK(a.data == b.data);
      CHECK(a.data != c.data);
      CHECK(a.dim() == 2);
      CHECK(a.meta.source == name);
      CHECK(a.data.cwiseAbs().maxCoeff() <= 1.05);
      // Prefixes agree because every sample owns its stream.
      CHECK(sample_dataset(name, 10, 11).data == a.data.topRows(10));
    }
    CHECK_THROWS_AS(sample_dataset("moons", 10, 0), ConfigError);
    CHECK_THROWS_AS(sample_spiral(0, 0), ConfigError);
  }

  TEST_CASE("spiral normalization") {
    const Eigen::Vector2d p = spiral::normalize(spiral::raw_point(1.0, 0.0, 0.0));
    CHECK(p.x() == doctest::Approx(-0.018767714975191252).epsilon(1e-14));
    CHECK(p.y() == doctest::Approx(0.67793104457061615).epsilon(1e-14));
    const double m = spiral::kMarginStds * spiral::kNoiseStd;
    const Eigen::Vector2d lo = spiral::normalize({spiral::kRawXMin - m, spiral::kRawYMin - m});
    const Eigen::Vector2d hi = spiral::normalize({spiral::kRawXMax + m, spiral::kRawYMax + m});
    CHECK(lo.x() == doctest::Approx(-1.0));
    CHECK(lo.y() == doctest::Approx(-1.0));
    CHECK(hi.x() == doctest::Approx(1.0));
    CHECK(hi.y() == doctest::Approx(1.0));
  }

  TEST_CASE("8gaussians moments") {
    const SampleBatch b = sample_8gaussians(200000, 5);
    const Eigen::RowVector2d mean = b.data.colwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() < 0.01);
    const double radius = b.data.rowwise().norm().mean();
    CHECK(radius == doctest::Approx(0.8).epsilon(0.01));
  }

  TEST_CASE("circles split between rings") {
    const SampleBatch b = sample_circles(100000, 3);
    const Eigen::VectorXd r = b.data.rowwise().norm();
    const double inner = (r.array() < 0.6).cast<double>().mean();
    CHECK(inner == doctest::Approx(0.5).epsilon(0.02));
  }

  TEST_CASE("bessel helpers") {
    const double z[] = {0.5, 10, 29.9, 30.1, 200, 5000};
    const double log_i0[] = {0.061549719185481189, 7.9429720831186952, 27.286385310555094,
                             27.483023208951185, 196.43252935422348, 4994.822489873588};
    const double ratio[] = {0.24249961258080202, 0.94859982595484593, 0.98313283326580581,
                            0.98324589715371102, 0.99749685925164355, 0.99989999499899951};
    for (int i = 0; i < 6; ++i) {
      CAPTURE(z[i]);
      CHECK(log_bessel_i0(z[i]) == doctest::Approx(log_i0[i]).epsilon(1e-13));
      CHECK(bessel_i1_over_i0(z[i]) == doctest::Approx(ratio[i]).epsilon(1e-13));
    }
    CHECK(log_bessel_i0(0.0) == 0.0);
    CHECK(bessel_i1_over_i0(0.0) == 0.0);
  }

  TEST_CASE("mixture log densities match reference values") {
    const GaussianMixture g = mixture_8gaussians();
    CHECK(g.log_density(Eigen::Vector2d(0.8, 0.0)) == doctest::Approx(2.0741459390188006).epsilon(1e-13));
    CHECK(g.log_density(Eigen::Vector2d(0.1, 0.2)) == doctest::Approx(-68.023208073515534).epsilon(1e-13));

    const RingMixture c = mixture_circles();
    CHECK(c.log_density({0.4, 0.0}) == doctest::Approx(1.1556966446428).epsilon(1e-12));
    CHECK(c.log_density({0.3, 0.5}) == doctest::Approx(-25.8519647169033).epsilon(1e-12));
    CHECK(c.log_density({0.05, 0.02}) == doctest::Approx(-93.693440913461).epsilon(1e-12));
    CHECK(c.log_density({0.0, 0.81}) == doctest::Approx(0.375969586727023).epsilon(1e-12));

    const RingMixture cp = c.perturbed(0.3);
    CHECK(cp.log_density({0.2, -0.1}) == doctest::Approx(-1.59858091267898).epsilon(1e-12));
    CHECK(cp.log_density({0.0, 0.0}) == doctest::Approx(-1.56584011753832).epsilon(1e-12));
  }

  TEST_CASE("perturbed standard normal stays standard") {
    const GaussianMixture n = standard_normal_mixture(3);
    for (double ab : {0.9, 0.5, 1e-6}) {
      const GaussianMixture p = n.perturbed(ab);
      CHECK(p.covariances()[0] == Eigen::MatrixXd::Identity(3, 3));
      CHECK(p.means().isZero(0.0));
    }
  }

  TEST_CASE("log density gradients agree with finite differences") {
    const GaussianMixture g = mixture_8gaussians().perturbed(0.7);
    const RingMixture c = mixture_circles().perturbed(0.7);
    RngStream rng(8, 0);
    for (int k = 0; k < 200; ++k) {
      const Eigen::Vector2d x(rng.normal(), rng.normal());
      Eigen::VectorXd gg;
      g.log_density(x, &gg);
      CHECK(fd_grad_error([&](const Eigen::Vector2d& y) { return g.log_density(y); }, x, gg) < 1e-6);
      Eigen::Vector2d gc;
      c.log_density(x, &gc);
      CHECK(fd_grad_error([&](const Eigen::Vector2d& y) { return c.log_density(y); }, x, gc) < 1e-6);
    }
    // At the ring centre the gradient vanishes by symmetry.
    Eigen::Vector2d g0;
    c.log_density(Eigen::Vector2d::Zero(), &g0);
    CHECK(g0 == Eigen::Vector2d::Zero());
  }

  TEST_CASE("mixture validation") {
    const Eigen::MatrixXd means = Eigen::MatrixXd::Zero(2, 2);
    const std::vector<Eigen::MatrixXd> covs(2, Eigen::MatrixXd::Identity(2, 2));
    CHECK_THROWS_AS(GaussianMixture(Eigen::Vector2d(0.5, 0.6), means, covs), ConfigError);
    CHECK_THROWS_AS(GaussianMixture(Eigen::Vector2d(1.5, -0.5), means, covs), ConfigError);
    CHECK_THROWS_AS(GaussianMixture(Eigen::VectorXd::Ones(1) , means, covs), ConfigError);
    Eigen::MatrixXd bad(2, 2);
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS(GaussianMixture(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Zero(1, 2), {bad}), NumericalError);
    CHECK_THROWS_AS(RingMixture({{1.0, 0.5, 0.0}}), ConfigError);
    CHECK_THROWS_AS(mixture_8gaussians().log_density(Eigen::Vector3d::Zero()), ContractViolation);
  }

  TEST_CASE("csv round trip is exact") {
    const SampleBatch b = sample_pinwheel(257, 9);
    const fs::path path = temp_file("pinwheel.csv");
    write_csv(b, path);
    const SampleBatch r = read_csv(path);
    CHECK(r.data == b.data);
  }

  TEST_CASE("csv errors") {
    CHECK_THROWS_AS(read_csv(temp_file("does_not_exist.csv")), IoError);
    const fs::path ragged = temp_file("ragged.csv");
    std::ofstream(ragged) << "x0,x1\n1,2\n3\n";
    CHECK_THROWS_AS(read_csv(ragged), IoError);
    const fs::path junk = temp_file("junk.csv");
    std::ofstream(junk) << "x0,x1\n1,abc\n";
    CHECK_THROWS_AS(read_csv(junk), IoError);
  }

  TEST_CASE("8gaussians component frequencies") {
    const SampleBatch b = sample_8gaussians(100000, 14);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(8);
    for (Eigen::Index i = 0; i < b.count(); ++i) {
      double angle = std::atan2(b.data(i, 1), b.data(i, 0));
      if (angle < -std::numbers::pi / 8) angle += 2 * std::numbers::pi;
      counts(static_cast<int>(std::lround(angle / (std::numbers::pi / 4))) % 8) += 1;
    }
    const double expect = 100000.0 / 8;
    const double chi2 = (counts.array() - expect).square().sum() / expect;
    CHECK(chi2 < 24.32);  // 99.9% quantile at 7 degrees of freedom
    const GaussianMixture gm = mixture_8gaussians();
    CHECK(gm.means().row(0).isApprox(Eigen::RowVector2d(0.8, 0.0)));
    CHECK((gm.means().row(2) - Eigen::RowVector2d(0.0, 0.8)).norm() < 1e-15);
  }

  TEST_CASE("pinwheel is symmetric under a fifth turn") {
    const SampleBatch b = sample_pinwheel(100000, 15);
    const double c = std::cos(2 * std::numbers::pi / 5), s = std::sin(2 * std::numbers::pi / 5);
    Eigen::Matrix2d rot;
    rot << c, -s, s, c;
    const Eigen::MatrixXd turned = b.data * rot.transpose();
    const double d = jsd(histogram2d(b.data, Bounds2d{}, 100, 100), histogram2d(turned, Bounds2d{}, 100, 100));
    CHECK(d <= 0.02);
  }

  TEST_CASE("circles examples") {
    const RingMixture c = mixture_circles();
    CHECK(c.rings()[0].radius == 0.4);
    CHECK(c.rings()[1].radius == 0.8);
    CHECK(c.rings()[0].weight == 0.5);
    // Both rings carry the same density at their own radius, up to the radius factor.
    const double outer = c.log_density({0.8, 0.0}), inner = c.log_density({-0.4, 0.0});
    CHECK(inner - outer == doctest::Approx(std::log(2.0)).epsilon(1e-3));
  }
}
