#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csmlgcn/model.hpp"
#include "csmlgcn/queries.hpp"

namespace csmlgcn {

enum class Optimizer { adam, sgd };

// `epoch`: one pass over the training queries per iteration.
// `query`: one single-query update per iteration.
enum class IterationUnit { epoch, query };

// Arithmetic of the training forward/backward passes. Parameters and
// optimizer state are always kept in double.
enum class Precision { f32, f64 };

struct TrainConfig {
  Index epochs = 200;
  double learning_rate = 0.001;
  double dropout_rate = 0.5;
  Index hidden_dim = 128;
  Index out_dim = 64;
  Index depth = 2;
  Index head_hidden = 64;
  double eta_default = 0.5;
  std::uint64_t seed = 0;
  std::optional<Index> candidate_hops;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Optimizer optimizer = Optimizer::adam;
  IterationUnit iteration_unit = IterationUnit::epoch;
  bool select_best = true;  // keep the best-validation-F1 parameters
  Precision precision = Precision::f32;

  void validate() const;
  Architecture architecture(Index feature_dim, Index view_count) const;
};

// `key = value` or `key value` lines, `#` comments. Keys are the TrainConfig
// field names; values not mentioned keep what `base` holds.
TrainConfig parse_config(std::istream& in, const std::string& source_name, TrainConfig base = {});
TrainConfig read_config(const std::string& path, TrainConfig base = {});
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
void write_config(std::ostream& out, const TrainConfig& cfg);

struct AdamState {
  ModelParams first;
  ModelParams second;
  Index step = 0;

  static AdamState zeros_like(const ModelParams& p);
};

// Bias-corrected Adam (or plain gradient descent when so configured).
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg);

struct TrainingRecord {
  std::vector<double> loss;            // summed query loss per iteration
  std::vector<double> validation_f1;   // NaN when no validation queries
  std::vector<double> seconds;
  Index best_iteration = -1;           // 0-based, -1 when nothing was selected

  std::size_t size() const { return loss.size(); }
};

struct TrainResult {
  ModelParams params;
  TrainingRecord record;
};

// One prepared query: the graph it runs on plus its inputs and labels.
struct TrainingExample {
  std::shared_ptr<const PropagationGraph> graph;
  Matrix features;
  Matrix query;
  std::vector<double> labels;
};

TrainingExample make_example(const MultiplexGraph& g, const Matrix& features,
                             const QueryPair& pair, std::optional<Index> candidate_hops,
                             std::shared_ptr<const PropagationGraph> full_graph = nullptr);

// Loss and gradients of one query at the given parameters.
struct QueryGradient {
  double loss = 0;
  ModelParams grads;
};
QueryGradient query_gradient(const ModelParams& params, const TrainingExample& ex,
                             const ForwardContext& ctx, Precision precision = Precision::f64);

// Offline training over the training queries. `features` is the
// row-normalized feature matrix of g. When `initial` is given it replaces the
// seeded initialization.
TrainResult train(const MultiplexGraph& g, const Matrix& features,
                  std::span<const QueryPair> train_queries,
                  std::span<const QueryPair> validation_queries, const TrainConfig& cfg,
                  const ModelParams* initial = nullptr);

void write_training_record(std::ostream& out, const TrainingRecord& record, bool timing = true);

}  // namespace csmlgcn
