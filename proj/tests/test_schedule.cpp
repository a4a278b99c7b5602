#include <doctest.h>

#include <cmath>

#include "scoreis/schedule.hpp"

using namespace scoreis;

TEST_SUITE("schedule") {
  TEST_CASE("cosine decay at zero") {
    CHECK(cosine_decay(0.0, kDefaultEpsD) == doctest::Approx(0.99984459100040823).epsilon(1e-15));
  }

  TEST_CASE("default schedule shape") {
    const NoiseSchedule s = build_cosine_schedule(1000);
    CHECK(s.steps() == 1000);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(1000) < 1e-3);
    for (int t = 1; t <= 1000; ++t) {
      REQUIRE(s.beta(t) >= kBetaFloor);
      REQUIRE(s.beta(t) <= kBetaCeiling);
      REQUIRE(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
    // f vanishes at tau = 1: the ceiling binds one step early and the floor at T.
    CHECK(s.beta(999) == kBetaCeiling);
    CHECK(s.beta(1000) == kBetaFloor);
  }

  TEST_CASE("cumulative product telescopes") {
    for (int steps : {2, 10, 1000, 4096}) {
      const NoiseSchedule s = build_cosine_schedule(steps);
      for (int t = 1; t <= steps; ++t) {
        const double expect = s.alpha_bar(t - 1) * (1.0 - s.beta(t));
        REQUIRE(std::abs(s.alpha_bar(t) - expect) <= 1e-15 * s.alpha_bar(t));
      }
    }
  }

  TEST_CASE("unclamped steps follow the decay ratio") {
    // alpha_bar_t / alpha_bar_1 = f(tau_{t+1}) / f(tau_2) while no clamp is active.
    const int steps = 10000;
    const NoiseSchedule s = build_cosine_schedule(steps);
    for (int t : {100, 2500, 5000, 7500}) {
      const double ratio = s.alpha_bar(t) / s.alpha_bar(1);
      const double expect = cosine_decay(double(t + 1) / steps, kDefaultEpsD) / cosine_decay(2.0 / steps, kDefaultEpsD);
      CHECK(std::abs(ratio - expect) <= 1e-12 * expect);
    }
  }

  TEST_CASE("continuous limit of the exponential sum") {
    // exp(-sum beta) approaches the product as T grows; the gap is O(1/T).
    double previous = 1.0;
    for (int steps : {1000, 10000, 100000}) {
      const NoiseSchedule s = build_cosine_schedule(steps);
      double sum = 0.0;
      for (int t = 1; t <= steps / 2; ++t) sum += s.beta(t);
      const double rel = std::abs(std::exp(-sum) - s.alpha_bar(steps / 2)) / s.alpha_bar(steps / 2);
      CHECK(rel < previous);
      previous = rel;
    }
    CHECK(previous < 1e-5);
  }

  TEST_CASE("float instantiation") {
    const NoiseScheduleT<float> s = build_cosine_schedule<float>(100, 0.008f);
    CHECK(s.alpha_bar(0) == 1.0f);
    CHECK(s.alpha_bar(50) == doctest::Approx(build_cosine_schedule(100).alpha_bar(50)).epsilon(1e-5));
  }

  TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(build_cosine_schedule(1), ConfigError);
    CHECK_THROWS_AS(build_cosine_schedule(100, 0.0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule(3, 0.008, {0.1, 0.2}), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule(2, 0.008, {0.1, 1.0}), ConfigError);
    const NoiseSchedule s = build_cosine_schedule(10);
    CHECK_THROWS_AS(s.alpha_bar(11), ContractViolation);
    CHECK_THROWS_AS(s.beta(0), ContractViolation);
  }
}
