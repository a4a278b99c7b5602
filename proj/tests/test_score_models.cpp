#include <doctest.h>

#include <cmath>
#include <vector>

#include "scoreis/rng.hpp"
#include "scoreis/score_models.hpp"

using namespace scoreis;

TEST_SUITE("score_models") {
  TEST_CASE("standard normal score is -x at every step") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MixtureScore score(standard_normal_mixture(2), s);
    RngStream rng(3, 0);
    Eigen::MatrixXd pts(50, 2);
    rng.fill_normal(pts);
    for (int t : {1, 10, 500, 999, 1000}) CHECK(score.score_batch(pts, t) == -pts);
  }

  TEST_CASE("shifted normal under a two-step schedule") {
    // beta = 0.5, 0.5 gives alpha_bar = 0.5, 0.25.
    const NoiseSchedule s(2, kDefaultEpsD, {0.5, 0.5});
    CHECK(s.alpha_bar(2) == 0.25);
    Eigen::MatrixXd mu(1, 2);
    mu << 1.0, -2.0;
    const GaussianMixture gm(Eigen::VectorXd::Ones(1), mu, {Eigen::MatrixXd::Identity(2, 2)});
    const Eigen::Vector2d x(0.3, 0.7);
    const Eigen::Vector2d expect = -(x - 0.5 * mu.row(0).transpose());
    CHECK((mixture_perturbed_score(gm, s, 2, x) - expect).norm() < 1e-15);
    const MixtureScore score(gm, s);
    CHECK((score.score(x, 2) - expect).norm() < 1e-15);
  }

  TEST_CASE("mixture score at t = T is nearly -x") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MixtureScore score(mixture_8gaussians(), s);
    const Eigen::Vector2d x(0.4, -1.3);
    CHECK((score.score(x, 1000) + x).norm() < 1e-4);
  }

  TEST_CASE("ring score matches finite differences of the perturbed density") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const RingScore score(mixture_circles(), s);
    const RingMixture p = mixture_circles().perturbed(s.alpha_bar(200));
    const Eigen::Vector2d x(0.2, -0.5);
    const double h = 1e-6;
    const Eigen::Vector2d q = score.score(x, 200);
    for (int i = 0; i < 2; ++i) {
      Eigen::Vector2d hi = x, lo = x;
      hi(i) += h;
      lo(i) -= h;
      CHECK(q(i) == doctest::Approx((p.log_density(hi) - p.log_density(lo)) / (2 * h)).epsilon(1e-6));
    }
  }

  TEST_CASE("time embedding") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const Eigen::VectorXd e = time_embedding(500, s);
    REQUIRE(e.size() == kTimeEmbeddingDim);
    CHECK(e(0) == doctest::Approx(0.47942553860420301).epsilon(1e-14));
    CHECK(e(16) == doctest::Approx(0.87758256189037276).epsilon(1e-14));
    CHECK(e(5) == doctest::Approx(-0.95892427466313868).epsilon(1e-12));
    CHECK(e(21) == doctest::Approx(0.28366218546322541).epsilon(1e-12));
    CHECK(e(15) == doctest::Approx(-0.46777180532247614).epsilon(1e-10));
    CHECK(e(31) == doctest::Approx(-0.88384927343147801).epsilon(1e-10));
    for (int i = 0; i < 16; ++i) CHECK(e(i) * e(i) + e(16 + i) * e(16 + i) == doctest::Approx(1.0));
    CHECK(time_embedding(499, s) != e);
  }

  TEST_CASE("mlp score is scaled epsilon output") {
    const NoiseSchedule s = build_cosine_schedule(100);
    const MlpScore model(init_mlp_params(2, 16, 4), s);
    Eigen::MatrixXd pts(7, 2);
    RngStream rng(1, 1);
    rng.fill_normal(pts);
    for (int t : {1, 50, 100}) {
      const Eigen::MatrixXd eps = model.epsilon_batch(pts, t);
      CHECK((model.score_batch(pts, t) + eps / std::sqrt(1.0 - s.alpha_bar(t))).norm() < 1e-14);
    }
    // Row results do not depend on the batch they are in.
    CHECK(model.score_batch(pts.topRows(3), 40) == model.score_batch(pts, 40).topRows(3));
    CHECK_THROWS_AS(model.epsilon_batch(pts, 0), ContractViolation);
    CHECK_THROWS_AS(model.epsilon_batch(Eigen::MatrixXd::Zero(1, 3), 5), ContractViolation);
  }

  TEST_CASE("parameter validation") {
    MlpScoreParams p = init_mlp_params(2, 8, 0);
    CHECK_NOTHROW(p.validate());
    CHECK(init_mlp_params(2, 8, 0).weights[2] == p.weights[2]);
    CHECK(init_mlp_params(2, 8, 1).weights[2] != p.weights[2]);
    p.biases[1].resize(3);
    CHECK_THROWS_AS(p.validate(), ConfigError);
    CHECK_THROWS_AS(init_mlp_params(0, 8, 0), ConfigError);
  }

  TEST_CASE("training fits a point mass") {
    const NoiseSchedule s = build_cosine_schedule(100);
    SampleBatch data;
    data.data = Eigen::MatrixXd::Constant(2048, 2, 0.5);
    TrainHyper hyper;
    hyper.epochs = 50;
    hyper.batch = 256;
    hyper.hidden = 32;
    hyper.seed = 6;
    int calls = 0;
    const TrainResult r = train_mlp_score(data, s, hyper, [&](int epoch, double) { CHECK(epoch == ++calls); });
    CHECK(calls == 50);
    CHECK(r.epoch_losses.size() == 50);
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
    const MlpScore model(r.params, s);
    CHECK(denoising_loss_at(model, data.data, 50, 99) <= 0.05);

    const TrainResult again = train_mlp_score(data, s, hyper);
    CHECK(again.params.weights[3] == r.params.weights[3]);
  }

  TEST_CASE("embedding at t = 0 and distinctness over all steps") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const Eigen::VectorXd e0 = time_embedding(0, s);
    CHECK(e0.head(16).isZero(0.0));
    CHECK(e0.tail(16) == Eigen::VectorXd::Ones(16));
    std::vector<Eigen::VectorXd> all;
    for (int t = 1; t <= 1000; ++t) all.push_back(time_embedding(t, s));
    for (int t = 1; t < 1000; ++t) {
      REQUIRE(all[t] != all[t - 1]);
      CHECK(all[t].norm() == doctest::Approx(std::sqrt(16.0)));
    }
  }

  TEST_CASE("score converts back to the network output") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MlpScore model(init_mlp_params(2, 16, 8), s);
    RngStream rng(4, 4);
    Eigen::MatrixXd pts(200, 2);
    rng.fill_normal(pts);
    double worst_ulps = 0.0;
    for (int t : {1, 10, 500, 1000}) {
      const Eigen::MatrixXd eps = model.epsilon_batch(pts, t);
      const Eigen::MatrixXd back = model.score_batch(pts, t) * (-std::sqrt(1.0 - s.alpha_bar(t)));
      for (Eigen::Index i = 0; i < eps.size(); ++i) {
        const double e = eps.data()[i];
        const double ulp = std::nextafter(std::abs(e), INFINITY) - std::abs(e);
        worst_ulps = std::max(worst_ulps, std::abs(back.data()[i] - e) / ulp);
      }
      CHECK(model.score_batch(pts, t) == model.score_batch(pts, t));
    }
    // Division then multiplication by the same factor may round once each way.
    CHECK(worst_ulps <= 1.0);
  }

  TEST_CASE("mixture score at t = T over a grid") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    const MixtureScore score(mixture_8gaussians(), s);
    double worst = 0.0;
    for (double a = -3.0; a <= 3.0; a += 0.25)
      for (double b = -3.0; b <= 3.0; b += 0.25) {
        const Eigen::Vector2d x(a, b);
        if (x.norm() <= 3.0) worst = std::max(worst, (score.score(x, 1000) + x).cwiseAbs().maxCoeff());
      }
    CHECK(worst <= 1e-3);
  }
}
