#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "csmlgcn/graph.hpp"
#include "csmlgcn/model.hpp"

namespace csmlgcn {

// Per-node membership probabilities for one query. Nodes outside in_scope
// (the candidate subgraph, when one is used) carry psi = 0 and are never
// admitted to a community. An empty in_scope means every node.
struct MembershipScores {
  std::vector<double> psi;
  std::vector<std::uint8_t> in_scope;
  Matrix alpha;  // attention weights of the in-scope nodes, rows follow `nodes`
  NodeSet nodes; // node ids backing alpha rows

  bool admissible(Index u) const { return in_scope.empty() || in_scope[static_cast<std::size_t>(u)]; }
};

struct Community {
  NodeSet members;            // ascending
  std::vector<double> scores; // psi of each member, same order
};

// Eval-mode inference against a fixed graph; caches the full-graph operators.
// Safe to share across threads once constructed.
class Predictor {
 public:
  Predictor(const MultiplexGraph& g, Matrix features, ModelParams params,
            std::optional<Index> candidate_hops = std::nullopt);

  MembershipScores infer(std::span<const Index> query) const;

  const MultiplexGraph& graph() const { return *graph_; }
  const ModelParams& params() const { return params_; }
  std::optional<Index> candidate_hops() const { return hops_; }

 private:
  const MultiplexGraph* graph_;
  Matrix features_;
  ModelParams params_;
  std::optional<Index> hops_;
  PropagationGraph full_;
  std::vector<std::vector<Matrix>> view_cache_;  // eval-mode view encoder outputs, full graph only
};

MembershipScores infer_scores(const MultiplexGraph& g, const Matrix& features,
                              const ModelParams& params, std::span<const Index> query,
                              std::optional<Index> candidate_hops = std::nullopt);

enum class VisitOrder { fifo, lifo };

// Multiplex community identification: BFS from the query nodes admitting any
// union-graph neighbor whose score is at least eta. Query nodes are always
// members.
Community identify_community(const MultiplexGraph& g, const MembershipScores& scores,
                             std::span<const Index> query, double eta,
                             VisitOrder order = VisitOrder::fifo);

Community identify_community(const Predictor& model, std::span<const Index> query, double eta);

struct BatchResult {
  std::vector<Community> communities;
  std::vector<double> millis;
  double mean_millis = 0;
  double median_millis = 0;
};

BatchResult batch_query(const Predictor& model, std::span<const NodeSet> queries, double eta);

}  // namespace csmlgcn
