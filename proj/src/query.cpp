#include "csmlgcn/query.hpp"

#include <algorithm>
#include <chrono>
#include <deque>

namespace csmlgcn {

namespace {

// Clamped to the loss's range: psi never reaches exactly 0 or 1.
std::pair<std::vector<double>, Matrix> collect(const ForwardPass& pass) {
  const Matrix psi = pass.psi.value().cwiseMax(kProbabilityClamp).cwiseMin(1.0 - kProbabilityClamp);
  return {std::vector<double>(psi.data(), psi.data() + psi.size()), pass.fusion.alpha.value()};
}

// Eval-mode forward on one prepared graph; returns psi and alpha.
std::pair<std::vector<double>, Matrix> run_model(const PropagationGraph& graph, const Matrix& features,
                                                 const Matrix& query, const ModelParams& params) {
  Tape tape;
  const ModelVars vars = bind(tape, params, false);
  return collect(model_forward(graph, tape.constant(features), tape.constant(query), vars,
                               ForwardContext{}));
}

}  // namespace

Predictor::Predictor(const MultiplexGraph& g, Matrix features, ModelParams params,
                     std::optional<Index> candidate_hops)
    : graph_(&g),
      features_(std::move(features)),
      params_(std::move(params)),
      hops_(candidate_hops),
      full_(g) {
  if (features_.rows() != g.node_count()) throw Error("feature rows do not match the graph");
  validate_params(params_, features_.cols(), g.layer_count());
  retain_heap();
  if (!hops_) {
    Tape tape;
    const ModelVars vars = bind(tape, params_, false);
    const Var x = tape.constant(features_);
    for (Index r = 0; r < g.layer_count(); ++r) {
      std::vector<Matrix> outputs;
      for (const Var& v : view_encoder_forward(full_.layers[r], x, vars.view_encoders[r], ForwardContext{})) {
        outputs.push_back(v.value());
      }
      view_cache_.push_back(std::move(outputs));
    }
  }
}

MembershipScores Predictor::infer(std::span<const Index> query) const {
  const Index n = graph_->node_count();
  const QueryVector cq = encode_query(query, n);
  MembershipScores out;
  if (!hops_) {
    Tape tape;
    const ModelVars vars = bind(tape, params_, false);
    std::vector<std::vector<Var>> ve;
    for (const auto& outputs : view_cache_) {
      auto& vars_r = ve.emplace_back();
      for (const Matrix& m : outputs) vars_r.push_back(tape.constant(m));
    }
    auto [psi, alpha] = collect(model_forward(full_, ve, tape.constant(cq.as_column()), vars, ForwardContext{}));
    out.psi = std::move(psi);
    out.alpha = std::move(alpha);
    out.nodes.resize(static_cast<std::size_t>(n));
    for (Index u = 0; u < n; ++u) out.nodes[u] = u;
    return out;
  }
  const Subgraph sub = khop_subgraph(*graph_, query, *hops_);
  const Index m = sub.graph.node_count();
  Matrix x(m, features_.cols());
  for (Index i = 0; i < m; ++i) x.row(i) = features_.row(sub.to_parent[i]);
  NodeSet local;
  for (Index u : query) local.push_back(sub.local(u));
  auto [psi, alpha] = run_model(PropagationGraph(sub.graph), x, encode_query(local, m).as_column(), params_);
  out.psi.assign(static_cast<std::size_t>(n), 0.0);
  out.in_scope.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < m; ++i) {
    out.psi[sub.to_parent[i]] = psi[i];
    out.in_scope[sub.to_parent[i]] = 1;
  }
  out.alpha = std::move(alpha);
  out.nodes = sub.to_parent;
  return out;
}

MembershipScores infer_scores(const MultiplexGraph& g, const Matrix& features,
                              const ModelParams& params, std::span<const Index> query,
                              std::optional<Index> candidate_hops) {
  return Predictor(g, features, params, candidate_hops).infer(query);
}

Community identify_community(const MultiplexGraph& g, const MembershipScores& scores,
                             std::span<const Index> query, double eta, VisitOrder order) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error("eta must lie in [0, 1]");
  if (query.empty()) throw Error("empty query");
  const Index n = g.node_count();
  if (static_cast<Index>(scores.psi.size()) != n) throw Error("score vector does not match the graph");

  std::vector<std::uint8_t> member(static_cast<std::size_t>(n), 0);
  std::deque<Index> pending;
  for (Index u : query) {
    if (u < 0 || u >= n) throw Error("query node " + std::to_string(u) + " out of range");
    if (!member[u]) {
      member[u] = 1;
      pending.push_back(u);
    }
  }
  while (!pending.empty()) {
    Index u;
    if (order == VisitOrder::fifo) {
      u = pending.front();
      pending.pop_front();
    } else {
      u = pending.back();
      pending.pop_back();
    }
    for (Index r = 0; r < g.layer_count(); ++r) {
      for (Index v : g.neighbors(r, u)) {
        if (!member[v] && scores.admissible(v) && scores.psi[v] >= eta) {
          member[v] = 1;
          pending.push_back(v);
        }
      }
    }
  }
  Community c;
  for (Index u = 0; u < n; ++u) {
    if (member[u]) {
      c.members.push_back(u);
      c.scores.push_back(scores.psi[u]);
    }
  }
  return c;
}

Community identify_community(const Predictor& model, std::span<const Index> query, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error("eta must lie in [0, 1]");
  return identify_community(model.graph(), model.infer(query), query, eta);
}

BatchResult batch_query(const Predictor& model, std::span<const NodeSet> queries, double eta) {
  BatchResult out;
  for (const auto& q : queries) {
    const auto start = std::chrono::steady_clock::now();
    out.communities.push_back(identify_community(model, q, eta));
    out.millis.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  if (!out.millis.empty()) {
    double total = 0;
    for (double m : out.millis) total += m;
    out.mean_millis = total / static_cast<double>(out.millis.size());
    std::vector<double> sorted = out.millis;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    out.median_millis = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  }
  return out;
}

}  // namespace csmlgcn
