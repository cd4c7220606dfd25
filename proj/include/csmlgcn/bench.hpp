#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "csmlgcn/metrics.hpp"
#include "csmlgcn/query.hpp"
#include "csmlgcn/queries.hpp"
#include "csmlgcn/trainer.hpp"

namespace csmlgcn {

struct QuerySplit {
  std::vector<QueryPair> train;
  std::vector<QueryPair> validation;
  std::vector<QueryPair> test;
};

using SplitRatio = std::array<Index, 3>;
inline constexpr SplitRatio kDefaultSplitRatio{150, 100, 100};

// Seeded shuffle, then validation and test take floor(N * share); train gets
// the rest.
QuerySplit make_splits(std::vector<QueryPair> pairs, SplitRatio ratio, std::uint64_t seed);

enum class AttributeMode { none, community };

struct SynthSpec {
  Index node_count = 200;
  Index community_count = 4;
  Index layer_count = 3;       // signal layers
  double p_in = 0.3;
  double p_out = 0.05;
  Index noise_layers = 0;      // appended after the signal layers
  double p_noise = 0.1;
  AttributeMode attribute_mode = AttributeMode::community;
  double flip_probability = 0.1;
  Index max_pairs = 350;       // pairs generated: min(node_count, max_pairs)
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  MultiplexGraph graph;
  std::vector<Index> membership;     // community of each node
  std::vector<NodeSet> communities;
  std::vector<QueryPair> pairs;
};

// Planted-partition signal layers plus Erdos-Renyi noise layers. Nodes are
// split into contiguous, balanced communities. Each query holds 1-3 distinct
// nodes of one community and that community is its ground truth.
SyntheticData gen_synthetic(const SynthSpec& spec);

struct EvalRow {
  Index query_id = 0;
  F1Score score;
  Index community_size = 0;
  double millis = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_f1 = 0;
  double mean_size = 0;
  double mean_millis = 0;
};

using ScoreFn = std::function<MembershipScores(std::span<const Index>)>;

EvalReport run_eval(const MultiplexGraph& g, const ScoreFn& scores,
                    std::span<const QueryPair> test, double eta);
EvalReport run_eval(const Predictor& model, std::span<const QueryPair> test, double eta);

// `timing = false` writes 0 in the millis column so reruns are byte-identical.
void write_metrics_csv(std::ostream& out, const EvalReport& report, bool timing = true);

enum class AblationAxis { eta, epochs, dropout };
AblationAxis parse_axis(const std::string& name);

struct AblationRow {
  double value = 0;
  double mean_f1 = 0;
  double mean_size = 0;
};

struct AblationData {
  const MultiplexGraph* graph = nullptr;
  Matrix features;
  QuerySplit split;
};

// eta: one model, re-thresholded per value. epochs / dropout: one model per
// value, all from the same seed.
std::vector<AblationRow> run_ablation(AblationAxis axis, std::span<const double> values,
                                      const TrainConfig& config, const AblationData& data);

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

// Mean attention weight of each view over all in-scope nodes of the given
// queries.
std::vector<double> mean_attention(const Predictor& model, std::span<const QueryPair> queries);

}  // namespace csmlgcn
