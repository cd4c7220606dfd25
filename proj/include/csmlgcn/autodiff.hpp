#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass in creation order, which
// is already a topological order; backward() walks it once in reverse. Var is
// a cheap handle (tape pointer + slot). Gradients accumulate additively, so a
// Var used twice receives the sum of both contributions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csmlgcn/graph.hpp"
#include "csmlgcn/types.hpp"

namespace csmlgcn {

template <typename Scalar>
class BasicTape;

template <typename Scalar>
struct BasicVar {
  BasicTape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const MatrixX<Scalar>& value() const { return tape->value(*this); }
  const MatrixX<Scalar>& grad() const { return tape->grad(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

template <typename Scalar>
class BasicTape {
 public:
  using Matrix = MatrixX<Scalar>;
  using Var = BasicVar<Scalar>;
  using Backward = std::function<void(BasicTape&, const Matrix&)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, {}); }
  Var variable(Matrix value) { return push(std::move(value), true, {}); }

  // Records an op result. `backward` receives the incoming gradient and is
  // only kept when at least one parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }
  Var record(Matrix value, std::span<const Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Zero-shaped like the value when nothing flowed into v.
  const Matrix& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  void accumulate(Var v, Matrix&& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = std::move(g);
    } else {
      n.grad += g;
    }
  }

  // Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(Var output) {
    if (value(output).size() != 1) throw Error("backward: output must be a 1x1 scalar");
    Node& out = nodes_[output.id];
    if (!out.requires_grad) return;
    out.grad = Matrix::Ones(1, 1);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;

namespace detail {

inline std::string shape(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
void require_same_shape(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch " + shape(a.rows(), a.cols()) + " vs " +
                shape(b.rows(), b.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
BasicVar<Scalar> matmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.cols() != b.rows()) {
    throw Error("matmul: inner dimensions differ (" + detail::shape(a.rows(), a.cols()) + " * " +
                detail::shape(b.rows(), b.cols()) + ")");
  }
  MatrixX<Scalar> out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

// Same-shape sum, or a 1 x d row broadcast over every row of a.
template <typename Scalar>
BasicVar<Scalar> add(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    MatrixX<Scalar> out = a.value() + b.value();
    return a.tape->record(std::move(out), {a, b}, [a, b](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    MatrixX<Scalar> out = a.value().rowwise() + b.value().row(0);
    return a.tape->record(std::move(out), {a, b}, [a, b](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
      t.accumulate(a, g);
      t.accumulate(b, g.colwise().sum());
    });
  }
  throw Error("add: incompatible shapes " + detail::shape(a.rows(), a.cols()) + " and " +
              detail::shape(b.rows(), b.cols()));
}

template <typename Scalar>
BasicVar<Scalar> operator+(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  return add(a, b);
}

// Element-wise product.
template <typename Scalar>
BasicVar<Scalar> mul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::require_same_shape(a, b, "mul");
  MatrixX<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

template <typename Scalar>
BasicVar<Scalar> scale(BasicVar<Scalar> a, Scalar s) {
  MatrixX<Scalar> out = a.value() * s;
  return a.tape->record(std::move(out), {a}, [a, s](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.accumulate(a, g * s);
  });
}

template <typename Scalar>
BasicVar<Scalar> relu(BasicVar<Scalar> a) {
  MatrixX<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape->record(std::move(out), {a}, [a](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.accumulate(a, g.cwiseProduct((t.value(a).array() > Scalar(0)).matrix().template cast<Scalar>()));
  });
}

template <typename Scalar>
BasicVar<Scalar> tanh(BasicVar<Scalar> a) {
  MatrixX<Scalar> out = a.value().array().tanh().matrix();
  const std::size_t self = a.tape->size();
  return a.tape->record(std::move(out), {a}, [a, self](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    const auto& y = t.value(BasicVar<Scalar>{&t, self});
    t.accumulate(a, (g.array() * (Scalar(1) - y.array().square())).matrix());
  });
}

template <typename Scalar>
BasicVar<Scalar> sigmoid(BasicVar<Scalar> a) {
  MatrixX<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  const std::size_t self = a.tape->size();
  return a.tape->record(std::move(out), {a}, [a, self](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    const auto& y = t.value(BasicVar<Scalar>{&t, self});
    t.accumulate(a, (g.array() * y.array() * (Scalar(1) - y.array())).matrix());
  });
}

// relu(a + b + bias) with bias a 1 x d row, as one tape node.
template <typename Scalar>
BasicVar<Scalar> relu_sum(BasicVar<Scalar> a, BasicVar<Scalar> b, BasicVar<Scalar> bias) {
  detail::require_same_shape(a, b, "relu_sum");
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw Error("relu_sum: bias must be " + detail::shape(1, a.cols()));
  }
  MatrixX<Scalar> out = ((a.value() + b.value()).rowwise() + bias.value().row(0)).cwiseMax(Scalar(0));
  const std::size_t self = a.tape->size();
  return a.tape->record(std::move(out), {a, b, bias},
                        [a, b, bias, self](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                          const auto& y = t.value(BasicVar<Scalar>{&t, self});
                          const MatrixX<Scalar> gated =
                              g.cwiseProduct((y.array() > Scalar(0)).matrix().template cast<Scalar>());
                          t.accumulate(a, gated);
                          t.accumulate(b, gated);
                          if (t.requires_grad(bias)) t.accumulate(bias, gated.colwise().sum());
                        });
}

// Row-wise softmax, stabilized by subtracting each row's maximum.
template <typename Scalar>
BasicVar<Scalar> softmax_rows(BasicVar<Scalar> a) {
  const auto& x = a.value();
  if (!x.allFinite()) throw Error("softmax_rows: non-finite input");
  MatrixX<Scalar> out = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  const std::size_t self = a.tape->size();
  return a.tape->record(std::move(out), {a}, [a, self](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    const auto& y = t.value(BasicVar<Scalar>{&t, self});
    // dx = y * (g - <g, y>_row)
    const VectorX<Scalar> dots = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(a, (y.array() * (g.colwise() - dots).array()).matrix());
  });
}

// Inverted dropout: survivors are scaled by 1 / (1 - rate); eval is identity.
template <typename Scalar>
BasicVar<Scalar> dropout(BasicVar<Scalar> a, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate must lie in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return a;
  // One draw from rng seeds a splitmix64 stream for this mask. Each 64-bit
  // word decides four entries; an entry survives when its 16-bit lane falls
  // below round((1 - rate) * 2^16).
  const auto threshold = static_cast<std::uint64_t>(std::lround(std::ldexp(1.0 - rate, 16)));
  const Scalar s = Scalar(1.0 / (1.0 - rate));
  MatrixX<Scalar> mask(a.rows(), a.cols());
  Scalar* m = mask.data();
  const Index size = mask.size();
  std::uint64_t state = rng();
  auto next = [&state] {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  // Branch-free lane < threshold: the difference wraps iff the lane is smaller.
  auto keep = [threshold, s](std::uint64_t lane) {
    return s * Scalar(((lane & 0xffffu) - threshold) >> 63);
  };
  Index i = 0;
  for (; i + 4 <= size; i += 4) {
    const std::uint64_t z = next();
    m[i] = keep(z);
    m[i + 1] = keep(z >> 16);
    m[i + 2] = keep(z >> 32);
    m[i + 3] = keep(z >> 48);
  }
  for (std::uint64_t z = next(); i < size; ++i, z >>= 16) m[i] = keep(z);
  MatrixX<Scalar> out = a.value().cwiseProduct(mask);
  return a.tape->record(std::move(out), {a},
                        [a, mask = std::move(mask)](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                          t.accumulate(a, g.cwiseProduct(mask));
                        });
}

// Row u of the result is sum_{v in N(u)} h_v / sqrt(p_u p_v). The operator
// is symmetric, so the backward pass applies it again.
template <typename Scalar>
BasicVar<Scalar> neighbor_aggregate(BasicVar<Scalar> h, const NormalizedAdjacency& adj) {
  if (h.rows() != adj.rows) {
    throw Error("neighbor_aggregate: " + std::to_string(h.rows()) + " rows for a " +
                std::to_string(adj.rows) + "-node layer");
  }
  MatrixX<Scalar> out = adj.apply(h.value());
  return h.tape->record(std::move(out), {h}, [h, &adj](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.accumulate(h, adj.apply(g));
  });
}

// Column sums as a 1 x cols row.
template <typename Scalar>
BasicVar<Scalar> sum_rows(BasicVar<Scalar> a) {
  MatrixX<Scalar> out = a.value().colwise().sum();
  const Index n = a.rows();
  return a.tape->record(std::move(out), {a}, [a, n](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.accumulate(a, g.replicate(n, 1));
  });
}

// Sum of all entries as 1 x 1.
template <typename Scalar>
BasicVar<Scalar> sum(BasicVar<Scalar> a) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows(), c = a.cols();
  return a.tape->record(std::move(out), {a}, [a, r, c](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.accumulate(a, MatrixX<Scalar>::Constant(r, c, g(0, 0)));
  });
}

template <typename Scalar>
BasicVar<Scalar> transpose(BasicVar<Scalar> a) {
  MatrixX<Scalar> out = a.value().transpose();
  return a.tape->record(std::move(out), {a}, [a](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.accumulate(a, g.transpose());
  });
}

template <typename Scalar>
BasicVar<Scalar> column(BasicVar<Scalar> a, Index j) {
  if (j < 0 || j >= a.cols()) throw Error("column: index out of range");
  MatrixX<Scalar> out = a.value().col(j);
  const Index r = a.rows(), c = a.cols();
  return a.tape->record(std::move(out), {a}, [a, j, r, c](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
    MatrixX<Scalar> full = MatrixX<Scalar>::Zero(r, c);
    full.col(j) = g.col(0);
    t.accumulate(a, full);
  });
}

// Side-by-side concatenation of equally tall matrices.
template <typename Scalar>
BasicVar<Scalar> hconcat(std::span<const BasicVar<Scalar>> parts) {
  if (parts.empty()) throw Error("hconcat: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error("hconcat: row counts differ");
    cols += p.cols();
  }
  MatrixX<Scalar> out(rows, cols);
  std::vector<Index> starts;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    starts.push_back(at);
    at += p.cols();
  }
  std::vector<BasicVar<Scalar>> keep(parts.begin(), parts.end());
  return parts.front().tape->record(
      std::move(out), parts,
      [keep, starts](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
        for (std::size_t i = 0; i < keep.size(); ++i) {
          if (t.requires_grad(keep[i])) t.accumulate(keep[i], g.middleCols(starts[i], keep[i].cols()));
        }
      });
}

// Multiplies row u of a by weights(u, 0).
template <typename Scalar>
BasicVar<Scalar> scale_rows(BasicVar<Scalar> a, BasicVar<Scalar> weights) {
  if (weights.cols() != 1 || weights.rows() != a.rows()) {
    throw Error("scale_rows: weights must be " + detail::shape(a.rows(), 1));
  }
  MatrixX<Scalar> out = a.value().array().colwise() * weights.value().col(0).array();
  return a.tape->record(std::move(out), {a, weights},
                        [a, weights](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                          if (t.requires_grad(a)) {
                            t.accumulate(a, (g.array().colwise() * t.value(weights).col(0).array()).matrix());
                          }
                          if (t.requires_grad(weights)) {
                            t.accumulate(weights, g.cwiseProduct(t.value(a)).rowwise().sum());
                          }
                        });
}

inline constexpr double kProbabilityClamp = 1e-12;

// Mean binary cross-entropy of an n x 1 probability column against 0/1
// labels. Probabilities are clamped to [1e-12, 1 - 1e-12] before the log and
// the clamped value is used in the derivative. Evaluated in double whatever
// the tape's scalar, so the clamp keeps its meaning in single precision.
template <typename Scalar>
BasicVar<Scalar> bce(BasicVar<Scalar> psi, std::span<const double> labels) {
  if (psi.cols() != 1 || psi.rows() != static_cast<Index>(labels.size())) {
    throw Error("bce: " + std::to_string(labels.size()) + " labels for " +
                detail::shape(psi.rows(), psi.cols()) + " scores");
  }
  const Index n = psi.rows();
  constexpr double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double total = 0;
  for (Index u = 0; u < n; ++u) {
    const double p = std::clamp(static_cast<double>(psi.value()(u, 0)), lo, hi);
    total -= labels[u] * std::log(p) + (1.0 - labels[u]) * std::log(1.0 - p);
  }
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(total / static_cast<double>(n));
  std::vector<double> y(labels.begin(), labels.end());
  return psi.tape->record(std::move(out), {psi},
                          [psi, y = std::move(y), n, lo, hi](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                            MatrixX<Scalar> d(n, 1);
                            const double scale = static_cast<double>(g(0, 0)) / static_cast<double>(n);
                            for (Index u = 0; u < n; ++u) {
                              const double p = std::clamp(static_cast<double>(t.value(psi)(u, 0)), lo, hi);
                              d(u, 0) = static_cast<Scalar>((-y[u] / p + (1.0 - y[u]) / (1.0 - p)) * scale);
                            }
                            t.accumulate(psi, std::move(d));
                          });
}

// Central-difference check of a scalar function of several parameter
// matrices. `f` builds the function on the given tape from one Var per
// parameter. Returns the largest relative error
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
struct GradCheckResult {
  double max_relative_error = 0;
  double max_absolute_error = 0;
  std::size_t coordinates = 0;
};

using ScalarGraphFn = std::function<Var(Tape&, std::span<const Var>)>;

inline GradCheckResult grad_check(const ScalarGraphFn& f, std::vector<Matrix> params, double eps,
                                  double floor = 1e-6) {
  auto evaluate = [&](bool with_grad, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(with_grad ? tape.variable(p) : tape.constant(p));
    Var out = f(tape, vars);
    if (out.value().size() != 1) throw Error("grad_check: function must return a 1x1 value");
    const double value = out.value()(0, 0);
    if (!std::isfinite(value)) throw Error("grad_check: non-finite function value");
    if (with_grad) {
      tape.backward(out);
      for (const auto& v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };

  std::vector<Matrix> analytic;
  evaluate(true, &analytic);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Index i = 0; i < params[k].size(); ++i) {
      double& x = params[k].data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate(false, nullptr);
      x = saved - eps;
      const double down = evaluate(false, nullptr);
      x = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[k].data()[i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
      result.max_relative_error = std::max(result.max_relative_error, abs_err / denom);
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace csmlgcn
