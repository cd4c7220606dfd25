#pragma once

// Small random models and the end-to-end loss as a function of a flat
// parameter list, for finite-difference checks.

#include <memory>
#include <vector>

#include "csmlgcn/model.hpp"
#include "csmlgcn/trainer.hpp"
#include "oracles.hpp"

namespace csmlgcn::testing {

struct TinyProblem {
  MultiplexGraph graph;
  std::shared_ptr<PropagationGraph> prop;
  Matrix features;
  Matrix query;
  std::vector<double> labels;
  ModelParams params;
};

// n nodes, `layers` views, feature width f, every hidden width `width`.
inline TinyProblem tiny_problem(std::uint64_t seed, Index n, Index layers, Index f, Index width,
                                double edge_p = 0.4) {
  Rng rng(seed);
  TinyProblem t;
  t.graph = random_graph(n, layers, edge_p, rng);
  t.prop = std::make_shared<PropagationGraph>(t.graph);
  std::normal_distribution<double> normal;
  t.features.resize(n, f);
  for (Index i = 0; i < t.features.size(); ++i) t.features.data()[i] = normal(rng);
  const Index q = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
  t.query = encode_query(std::vector<Index>{q}, n).as_column();
  t.labels.assign(static_cast<std::size_t>(n), 0.0);
  for (Index u = 0; u < n; ++u) t.labels[u] = (u == q || rng() % 2) ? 1.0 : 0.0;
  Architecture arch;
  arch.feature_dim = f;
  arch.view_count = layers;
  arch.hidden_dim = width;
  arch.out_dim = width;
  arch.head_hidden = width;
  t.params = init_params(arch, rng);
  // Nonzero biases so their gradients are exercised too.
  for (Matrix* m : arrays(t.params)) {
    if (m->rows() == 1) {
      for (Index i = 0; i < m->size(); ++i) m->data()[i] = 0.1 * normal(rng);
    }
  }
  return t;
}

inline std::vector<Matrix> flatten(const ModelParams& p) {
  std::vector<Matrix> out;
  for (const Matrix* m : arrays(p)) out.push_back(*m);
  return out;
}

// Rebuilds the model layout of `skeleton` from Vars listed in for_each order.
inline ModelVars unflatten(const ModelParams& skeleton, std::span<const Var> vars) {
  std::size_t next = 0;
  return map_model<Var>(skeleton, [&](const Matrix&) { return vars[next++]; });
}

// Mean BCE of the full forward pass, dropout off.
inline ScalarGraphFn end_to_end_loss(const TinyProblem& t) {
  return [&t](Tape& tape, std::span<const Var> vars) {
    const ModelVars mv = unflatten(t.params, vars);
    const ForwardPass pass =
        model_forward(*t.prop, tape.constant(t.features), tape.constant(t.query), mv, ForwardContext{});
    return bce_loss(pass.psi, t.labels);
  };
}

}  // namespace csmlgcn::testing
