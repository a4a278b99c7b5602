#include <doctest.h>

#include <cmath>

#include "scoreis/autodiff.hpp"
#include "scoreis/errors.hpp"
#include "scoreis/rng.hpp"

using namespace scoreis;
using namespace scoreis::ad;

TEST_SUITE("autodiff") {
  TEST_CASE("sum of squares has gradient 2x") {
    Tape tp;
    const NodeId x = tp.leaf(Tensor::vector(Eigen::Vector3d(1.0, -2.0, 0.5)));
    const NodeId y = tp.sum(tp.mul(x, x));
    CHECK(tp.value(y).item() == 5.25);
    const Gradients g = tp.backward(y);
    CHECK(g[x].as_vector() == Eigen::Vector3d(2.0, -4.0, 1.0));
    CHECK(g[y].item() == 1.0);
  }

  TEST_CASE("matvec, broadcast and relu") {
    Tape tp;
    Storage m(2, 2);
    m << 1, 2, 3, 4;
    const NodeId w = tp.leaf(Tensor::matrix(m));
    const NodeId x = tp.leaf(Tensor::vector(Eigen::Vector2d(1.0, -1.0)));
    const NodeId h = tp.matvec(w, x);  // (-1, -1)
    CHECK(tp.value(h).as_vector() == Eigen::Vector2d(-1.0, -1.0));
    const NodeId r = tp.relu(h);
    CHECK(tp.value(r).as_vector() == Eigen::Vector2d(0.0, 0.0));

    Storage rows(2, 3);
    rows << 1, 2, 3, 4, 5, 6;
    const NodeId mat = tp.leaf(Tensor::matrix(rows));
    const NodeId bias = tp.leaf(Tensor::vector(Eigen::Vector3d(10, 20, 30)));
    const NodeId out = tp.broadcast_add(mat, bias);
    CHECK(tp.value(out).mat()(1, 2) == 36.0);
    const Gradients g = tp.backward(tp.sum(out));
    CHECK(g[bias].as_vector() == Eigen::Vector3d(2, 2, 2));
  }

  TEST_CASE("matmul gradient against hand calculation") {
    Tape tp;
    Storage a(1, 2), b(2, 1);
    a << 2, 3;
    b << 5, 7;
    const NodeId na = tp.leaf(Tensor::matrix(a)), nb = tp.leaf(Tensor::matrix(b));
    const NodeId y = tp.sum(tp.matmul(na, nb));
    CHECK(tp.value(y).item() == 31.0);
    const Gradients g = tp.backward(y);
    CHECK(g[na].mat()(0, 0) == 5.0);
    CHECK(g[na].mat()(0, 1) == 7.0);
    CHECK(g[nb].mat()(0, 0) == 2.0);
    CHECK(g[nb].mat()(1, 0) == 3.0);
  }

  TEST_CASE("untouched nodes receive exact zeros") {
    Tape tp;
    const NodeId a = tp.leaf(Tensor::scalar(2.0));
    const NodeId unused = tp.leaf(Tensor::vector(Eigen::Vector2d(1, 1)));
    const NodeId y = tp.exp(a);
    const Gradients g = tp.backward(y);
    CHECK(g[a].item() == doctest::Approx(std::exp(2.0)));
    CHECK(g[unused].as_vector() == Eigen::Vector2d::Zero());
  }

  TEST_CASE("contract and domain errors") {
    Tape tp;
    const NodeId v2 = tp.leaf(Tensor::vector(Eigen::Vector2d(1, 2)));
    const NodeId v3 = tp.leaf(Tensor::vector(Eigen::Vector3d(1, 2, 3)));
    CHECK_THROWS_AS(tp.add(v2, v3), ContractViolation);
    CHECK_THROWS_AS(tp.backward(v2), ContractViolation);
    const NodeId neg = tp.leaf(Tensor::scalar(-1.0));
    CHECK_THROWS_AS(tp.log(neg), DomainError);
    CHECK_THROWS_AS(tp.exp(tp.leaf(Tensor::scalar(1000.0))), NumericalError);
    CHECK_THROWS_AS(Tensor::vector(Eigen::Vector2d(1.0, NAN)), DomainError);
  }

  TEST_CASE("gradient check on random composite fields") {
    RngStream rng(77, 0);
    const ScalarField f = [](Tape& tp, NodeId x) {
      const NodeId s = tp.scale(x, 0.3);
      return tp.add(tp.log(tp.add(tp.leaf(Tensor::scalar(1.0)), tp.norm_sq(x))), tp.mean(tp.exp(s)));
    };
    for (int k = 0; k < 50; ++k) {
      Eigen::VectorXd x(4);
      for (int i = 0; i < 4; ++i) x(i) = 2.0 * rng.normal();
      CHECK(grad_check(f, Tensor::vector(x), 1e-6) <= 1e-7);
    }
  }
}
