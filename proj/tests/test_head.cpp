#include <doctest.h>

#include <cmath>
#include <limits>

#include "csmlgcn/head.hpp"

using namespace csmlgcn;

namespace {

HeadParams zero_head(Index d, Index hidden) {
  return {Matrix::Zero(d, hidden), Matrix::Zero(1, hidden), Matrix::Zero(hidden, 1), Matrix::Zero(1, 1)};
}

Matrix forward(const Matrix& zeta, const HeadParams& p) {
  Tape tape;
  const HeadVars v{tape.constant(p.w1), tape.constant(p.b1), tape.constant(p.w2), tape.constant(p.b2)};
  return head_forward(tape.constant(zeta), v).value();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("zero weights give one half everywhere") {
  const Matrix psi = forward(Matrix::Zero(7, 4), zero_head(4, 64));
  CHECK(psi.rows() == 7);
  CHECK(psi.cols() == 1);
  CHECK((psi.array() == 0.5).all());
}

TEST_CASE("hand-set one-dimensional head") {
  HeadParams p{Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, -0.5), Matrix::Constant(1, 1, 1.5),
               Matrix::Constant(1, 1, 0.25)};
  Matrix zeta(2, 1);
  zeta << 1.0, 0.1;
  const Matrix psi = forward(zeta, p);
  CHECK(psi(0, 0) == doctest::Approx(sigmoid(1.5 * 1.5 + 0.25)).epsilon(1e-14));
  CHECK(psi(1, 0) == doctest::Approx(sigmoid(0.25)).epsilon(1e-14));  // relu cuts 0.2 - 0.5
}

TEST_CASE("head matches the dense formula and is monotone in the output bias") {
  Rng rng(5);
  const Matrix zeta = Matrix::Random(9, 4);
  HeadParams p{Matrix::Random(4, 6), Matrix::Random(1, 6), Matrix::Random(6, 1), Matrix::Random(1, 1)};
  const Matrix hidden = ((zeta * p.w1).rowwise() + p.b1.row(0)).cwiseMax(0.0);
  const Matrix expect = (hidden * p.w2).array().unaryExpr([&](double x) { return sigmoid(x + p.b2(0, 0)); });
  const Matrix psi = forward(zeta, p);
  CHECK((psi - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(((psi.array() > 0.0) && (psi.array() < 1.0)).all());
  HeadParams q = p;
  q.b2(0, 0) += 0.3;
  CHECK((forward(zeta, q).array() >= psi.array()).all());
}

TEST_CASE("non-finite activations are rejected") {
  Matrix zeta = Matrix::Ones(3, 2);
  zeta(1, 1) = std::numeric_limits<double>::quiet_NaN();
  HeadParams p{Matrix::Ones(2, 2), Matrix::Zero(1, 2), Matrix::Ones(2, 1), Matrix::Zero(1, 1)};
  CHECK_THROWS_AS(forward(zeta, p), Error);
}

TEST_CASE("bce loss values") {
  Tape tape;
  const std::vector<double> y{1, 0, 1, 1};
  CHECK(bce_loss(tape.constant(Matrix::Constant(4, 1, 0.5)), y).value()(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  Matrix perfect(4, 1);
  perfect << 1, 0, 1, 1;
  const double l = bce_loss(tape.constant(perfect), y).value()(0, 0);
  CHECK(l >= 0.0);
  CHECK(l <= 1e-11);
  Matrix two(2, 1);
  two << 0.9, 0.2;
  const std::vector<double> y2{1, 0};
  CHECK(bce_loss(tape.constant(two), y2).value()(0, 0) ==
        doctest::Approx((-std::log(0.9) - std::log(0.8)) / 2).epsilon(1e-14));
  CHECK_THROWS_AS(bce_loss(tape.constant(two), y), Error);
}

TEST_CASE("bce gradient wrt psi") {
  const std::vector<double> y{1, 0, 0, 1, 1};
  Matrix psi = (Matrix::Random(5, 1).array() * 0.4 + 0.5).matrix();
  auto f = [&](Tape&, std::span<const Var> v) { return bce_loss(v[0], y); };
  const auto r = grad_check(f, {psi}, 1e-6);
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("total loss is a plain sum") {
  const std::vector<double> one{0.7};
  CHECK(total_loss(one) == 0.7);
  const std::vector<double> two{0.5, 0.25}, rev{0.25, 0.5};
  CHECK(total_loss(two) == 0.75);
  CHECK(total_loss(rev) == total_loss(two));
  CHECK_THROWS_AS(total_loss(std::vector<double>{}), Error);
}
