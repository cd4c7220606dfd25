#include <doctest.h>

#include "csmlgcn/autodiff.hpp"
#include "oracles.hpp"

using namespace csmlgcn;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Weighted sum so every output coordinate gets a distinct upstream gradient.
Var reduce(Tape& tape, Var y, Rng& rng) {
  return sum(mul(y, tape.constant(random_matrix(y.rows(), y.cols(), rng))));
}

void check_gradient(const ScalarGraphFn& f, std::vector<Matrix> params, double tol = 1e-6) {
  const GradCheckResult r = grad_check(f, std::move(params), 1e-6);
  CHECK(r.coordinates > 0);
  CHECK(r.max_relative_error < tol);
}

}  // namespace

TEST_CASE("matmul forward and gradients") {
  Rng rng(1);
  const Matrix a = random_matrix(4, 3, rng), b = random_matrix(3, 5, rng);
  Tape tape;
  CHECK(matmul(tape.constant(a), tape.constant(b)).value().isApprox(a * b, 1e-14));
  const Matrix w = random_matrix(4, 5, rng);
  check_gradient([&](Tape& t, std::span<const Var> v) { return sum(mul(matmul(v[0], v[1]), t.constant(w))); },
                 {a, b});
  CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(a)), Error);
}

TEST_CASE("elementwise ops") {
  Rng rng(2);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng), row = random_matrix(1, 4, rng);
  const Matrix w = random_matrix(3, 4, rng);
  auto weighted = [&](Tape& t, Var y) { return sum(mul(y, t.constant(w))); };

  SUBCASE("add, same shape and row broadcast") {
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, add(v[0], v[1])); }, {a, b});
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, add(v[0], v[1])); }, {a, row});
    Tape t;
    CHECK_THROWS_AS(add(t.constant(a), t.constant(Matrix::Zero(2, 4))), Error);
  }
  SUBCASE("mul and scale") {
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, mul(v[0], v[1])); }, {a, b});
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, scale(v[0], -2.5)); }, {a});
  }
  SUBCASE("relu away from the kink") {
    Matrix x = a;
    for (Index i = 0; i < x.size(); ++i) {
      if (std::abs(x.data()[i]) < 0.1) x.data()[i] = 0.5;
    }
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, relu(v[0])); }, {x});
    Tape t;
    CHECK(relu(t.constant(x)).value().minCoeff() >= 0);
  }
  SUBCASE("relu_sum") {
    Matrix x = a;
    check_gradient(
        [&](Tape& t, std::span<const Var> v) { return weighted(t, relu_sum(v[0], v[1], v[2])); },
        {x, b, row}, 1e-5);
    Tape t;
    const Matrix expect = ((a + b).rowwise() + row.row(0)).cwiseMax(0.0);
    CHECK(relu_sum(t.constant(a), t.constant(b), t.constant(row)).value().isApprox(expect));
  }
  SUBCASE("tanh and sigmoid") {
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, tanh(v[0])); }, {a});
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, sigmoid(v[0])); }, {a});
    Tape t;
    const Matrix s = sigmoid(t.constant(a)).value();
    CHECK(s(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-a(0, 0)))));
  }
  SUBCASE("reductions and reshaping") {
    const Matrix wide = random_matrix(3, 8, rng);
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, add(v[0], sum_rows(v[0]))); },
                   {a});
    check_gradient([&](Tape& t, std::span<const Var> v) {
      return sum(mul(transpose(v[0]), t.constant(w.transpose())));
    }, {a});
    check_gradient([&](Tape& t, std::span<const Var> v) {
      return sum(mul(column(v[0], 2), t.constant(w.col(0))));
    }, {a});
    check_gradient([&](Tape& t, std::span<const Var> v) {
      const Var parts[] = {v[0], v[1]};
      return sum(mul(hconcat<double>(parts), t.constant(wide)));
    }, {a, b});
    check_gradient([&](Tape& t, std::span<const Var> v) { return weighted(t, scale_rows(v[0], v[1])); },
                   {a, random_matrix(3, 1, rng)});
  }
}

TEST_CASE("gradients accumulate over every use of a value") {
  Tape tape;
  Matrix x(1, 1);
  x << 3.0;
  const Var v = tape.variable(x);
  const Var y = add(mul(v, v), v);  // x^2 + x
  tape.backward(y);
  CHECK(tape.grad(v)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("constants receive no gradient and unused variables get zeros") {
  Tape tape;
  const Var c = tape.constant(Matrix::Ones(2, 2));
  const Var v = tape.variable(Matrix::Ones(2, 2));
  const Var unused = tape.variable(Matrix::Ones(3, 1));
  tape.backward(sum(mul(c, v)));
  CHECK(tape.grad(v).isApprox(Matrix::Ones(2, 2)));
  CHECK(tape.grad(unused).isZero());
  CHECK(tape.grad(c).isZero());
}

TEST_CASE("backward requires a scalar output") {
  Tape tape;
  const Var v = tape.variable(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(v), Error);
}

TEST_CASE("softmax_rows") {
  Rng rng(3);
  Tape tape;
  const Matrix x = random_matrix(5, 3, rng, 3.0);
  const Matrix y = softmax_rows(tape.constant(x)).value();
  for (Index u = 0; u < y.rows(); ++u) CHECK(y.row(u).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.minCoeff() > 0);

  SUBCASE("shift invariance and large inputs") {
    Matrix shifted = x;
    shifted.array() += 1000.0;
    CHECK(softmax_rows(tape.constant(shifted)).value().isApprox(y, 1e-12));
    Matrix big(1, 2);
    big << 1000.0, 0.0;
    const Matrix p = softmax_rows(tape.constant(big)).value();
    CHECK(p.allFinite());
    CHECK(p(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("non-finite input is rejected") {
    Matrix bad = x;
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(softmax_rows(tape.constant(bad)), Error);
    bad(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax_rows(tape.constant(bad)), Error);
  }
  SUBCASE("gradient") {
    const Matrix w = random_matrix(5, 3, rng);
    check_gradient([&](Tape& t, std::span<const Var> v) { return sum(mul(softmax_rows(v[0]), t.constant(w))); },
                   {random_matrix(5, 3, rng)});
  }
}

TEST_CASE("dropout") {
  Rng rng(4);
  const Matrix x = random_matrix(40, 50, rng);
  Tape tape;
  const Var v = tape.variable(x);

  SUBCASE("eval mode and zero rate are the identity") {
    CHECK(dropout(v, 0.5, Mode::eval, rng).value() == x);
    CHECK(dropout(v, 0.0, Mode::train, rng).value() == x);
  }
  SUBCASE("rate out of range") {
    CHECK_THROWS_AS(dropout(v, 1.0, Mode::train, rng), Error);
    CHECK_THROWS_AS(dropout(v, -0.1, Mode::train, rng), Error);
  }
  SUBCASE("survivors are scaled and the mean is preserved") {
    const Matrix ones = Matrix::Ones(200, 200);
    for (double rate : {0.2, 0.5, 0.8}) {
      const Matrix y = dropout(tape.constant(ones), rate, Mode::train, rng).value();
      const double kept = (y.array() != 0).cast<double>().mean();
      // 40000 Bernoulli draws: the standard error is below 0.0025.
      CHECK(kept == doctest::Approx(1.0 - rate).epsilon(0.02));
      CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.03));
      for (Index i = 0; i < y.size(); ++i) {
        const double e = y.data()[i];
        CHECK((e == 0.0 || std::abs(e - 1.0 / (1.0 - rate)) < 1e-12));
      }
    }
  }
  SUBCASE("the backward pass reuses the forward mask") {
    const Var y = dropout(v, 0.5, Mode::train, rng);
    tape.backward(sum(y));
    const Matrix& g = tape.grad(v);
    for (Index i = 0; i < x.size(); ++i) {
      CHECK(g.data()[i] == doctest::Approx(y.value().data()[i] / x.data()[i]));
    }
  }
  SUBCASE("same seed, same mask") {
    Rng a(9), b(9);
    CHECK(dropout(v, 0.5, Mode::train, a).value() == dropout(v, 0.5, Mode::train, b).value());
  }
}

TEST_CASE("neighbor_aggregate equals the dense normalized adjacency product") {
  Rng rng(5);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 12);
    const Index layers = 1 + static_cast<Index>(rng() % 3);
    const auto g = testing::random_graph(n, layers, 0.35, rng);
    const PropagationGraph prop(g);
    for (Index r = 0; r < layers; ++r) {
      const Matrix dense = testing::dense_normalized_adjacency(g, r);
      for (Index width : {Index{1}, Index{5}}) {
        const Matrix h = random_matrix(n, width, rng);
        Tape tape;
        const Matrix got = neighbor_aggregate(tape.constant(h), prop.layers[r]).value();
        worst = std::max(worst, (got - dense * h).cwiseAbs().maxCoeff());
      }
      worst = std::max(worst, (prop.layers[r].to_dense() - dense).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("neighbor_aggregate gradient and shape check") {
  Rng rng(6);
  const auto g = testing::random_graph(8, 1, 0.4, rng);
  const PropagationGraph prop(g);
  const Matrix w = random_matrix(8, 3, rng);
  check_gradient(
      [&](Tape& t, std::span<const Var> v) { return sum(mul(neighbor_aggregate(v[0], prop.layers[0]), t.constant(w))); },
      {random_matrix(8, 3, rng)});
  Tape tape;
  CHECK_THROWS_AS(neighbor_aggregate(tape.constant(Matrix::Ones(7, 2)), prop.layers[0]), Error);
}

TEST_CASE("isolated nodes aggregate to zero") {
  MultiplexGraph g(3, 1);
  g.add_edge(0, 0, 1);
  const PropagationGraph prop(g);
  Tape tape;
  const Matrix out = neighbor_aggregate(tape.constant(Matrix::Ones(3, 2)), prop.layers[0]).value();
  CHECK(out.row(2).isZero());
  CHECK(out(0, 0) == doctest::Approx(0.5));  // 1 / sqrt(2 * 2)
}

TEST_CASE("bce") {
  Tape tape;
  Matrix psi(4, 1);
  psi << 0.9, 0.2, 0.6, 0.5;
  const std::vector<double> y{1, 0, 1, 0};
  const double expect =
      -(std::log(0.9) + std::log(0.8) + std::log(0.6) + std::log(0.5)) / 4.0;
  CHECK(bce(tape.constant(psi), y).value()(0, 0) == doctest::Approx(expect).epsilon(1e-14));

  SUBCASE("gradient") {
    check_gradient([&](Tape&, std::span<const Var> v) { return bce(v[0], y); }, {psi});
  }
  SUBCASE("saturated probabilities are clamped") {
    Matrix edge(2, 1);
    edge << 0.0, 1.0;
    const std::vector<double> wrong{1, 0};
    Tape t;
    const Var p = t.variable(edge);
    const Var loss = bce(p, wrong);
    CHECK(loss.value()(0, 0) == doctest::Approx(-std::log(kProbabilityClamp)).epsilon(1e-6));
    t.backward(loss);
    CHECK(t.grad(p).allFinite());
  }
  SUBCASE("label count must match") {
    const std::vector<double> short_labels{1, 0};
    CHECK_THROWS_AS(bce(tape.constant(psi), short_labels), Error);
  }
}

TEST_CASE("single precision tape agrees with double") {
  Rng rng(7);
  const Matrix a = random_matrix(6, 4, rng), b = random_matrix(4, 3, rng);
  BasicTape<float> tf;
  Tape td;
  const auto yf = softmax_rows(tanh(matmul(tf.constant(a.cast<float>()), tf.constant(b.cast<float>()))));
  const auto yd = softmax_rows(tanh(matmul(td.constant(a), td.constant(b))));
  CHECK((yf.value().cast<double>() - yd.value()).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("grad_check reports a wrong gradient") {
  // A deliberately broken op: forward doubles, backward claims the identity.
  auto broken = [](Tape&, std::span<const Var> v) {
    const Var x = v[0];
    Matrix out = x.value() * 2.0;
    return sum(x.tape->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) { t.accumulate(x, g); }));
  };
  const GradCheckResult r = grad_check(broken, {Matrix::Ones(2, 2)}, 1e-6);
  CHECK(r.max_relative_error == doctest::Approx(0.5).epsilon(1e-6));
}
