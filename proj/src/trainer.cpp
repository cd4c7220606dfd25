#include "csmlgcn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "csmlgcn/metrics.hpp"
#include "csmlgcn/query.hpp"

namespace csmlgcn {

void TrainConfig::validate() const {
  if (epochs < 0) throw Error("epochs must be >= 0");
  if (!(learning_rate >= 0)) throw Error("learning_rate must be >= 0");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw Error("dropout_rate must lie in [0, 1)");
  if (hidden_dim < 1 || out_dim < 1 || head_hidden < 1) throw Error("layer widths must be positive");
  if (depth < 1) throw Error("depth must be >= 1");
  if (!(eta_default >= 0 && eta_default <= 1)) throw Error("eta_default must lie in [0, 1]");
  if (candidate_hops && *candidate_hops < 0) throw Error("candidate_hops must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw Error("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw Error("adam_eps must be positive");
}

Architecture TrainConfig::architecture(Index feature_dim, Index view_count) const {
  Architecture a;
  a.feature_dim = feature_dim;
  a.view_count = view_count;
  a.hidden_dim = hidden_dim;
  a.out_dim = out_dim;
  a.depth = depth;
  a.head_hidden = head_hidden;
  return a;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw Error("config: bad value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error("config: bad boolean '" + value + "' for " + key);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "epochs") cfg.epochs = parse_number<Index>(key, value);
  else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
  else if (key == "dropout_rate") cfg.dropout_rate = parse_number<double>(key, value);
  else if (key == "hidden_dim") cfg.hidden_dim = parse_number<Index>(key, value);
  else if (key == "out_dim") cfg.out_dim = parse_number<Index>(key, value);
  else if (key == "depth") cfg.depth = parse_number<Index>(key, value);
  else if (key == "head_hidden") cfg.head_hidden = parse_number<Index>(key, value);
  else if (key == "eta_default") cfg.eta_default = parse_number<double>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "candidate_hops") {
    if (value == "none" || value.empty()) cfg.candidate_hops.reset();
    else cfg.candidate_hops = parse_number<Index>(key, value);
  } else if (key == "adam_beta1") cfg.adam_beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_number<double>(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_number<double>(key, value);
  else if (key == "optimizer") {
    if (value == "adam") cfg.optimizer = Optimizer::adam;
    else if (value == "sgd") cfg.optimizer = Optimizer::sgd;
    else throw Error("config: optimizer must be 'adam' or 'sgd'");
  } else if (key == "iteration_unit") {
    if (value == "epoch") cfg.iteration_unit = IterationUnit::epoch;
    else if (value == "query") cfg.iteration_unit = IterationUnit::query;
    else throw Error("config: iteration_unit must be 'epoch' or 'query'");
  } else if (key == "precision") {
    if (value == "f32") cfg.precision = Precision::f32;
    else if (value == "f64") cfg.precision = Precision::f64;
    else throw Error("config: precision must be 'f32' or 'f64'");
  } else if (key == "select_best") cfg.select_best = parse_bool(key, value);
  else throw Error("config: unknown key '" + key + "'");
}

TrainConfig parse_config(std::istream& in, const std::string& source_name, TrainConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), '=', ' ');
    std::istringstream fields(line);
    std::string key, value, extra;
    if (!(fields >> key)) continue;
    fields >> value;
    if (fields >> extra) throw ParseError(source_name, line_no, "trailing text after value");
    try {
      set_config_value(base, key, value);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source_name, line_no, e.what());
    }
  }
  base.validate();
  return base;
}

TrainConfig read_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  return parse_config(in, path, base);
}

void write_config(std::ostream& out, const TrainConfig& cfg) {
  out << "epochs = " << cfg.epochs << '\n'
      << "learning_rate = " << format_double(cfg.learning_rate) << '\n'
      << "dropout_rate = " << format_double(cfg.dropout_rate) << '\n'
      << "hidden_dim = " << cfg.hidden_dim << '\n'
      << "out_dim = " << cfg.out_dim << '\n'
      << "depth = " << cfg.depth << '\n'
      << "head_hidden = " << cfg.head_hidden << '\n'
      << "eta_default = " << format_double(cfg.eta_default) << '\n'
      << "seed = " << cfg.seed << '\n'
      << "candidate_hops = "
      << (cfg.candidate_hops ? std::to_string(*cfg.candidate_hops) : std::string("none")) << '\n'
      << "adam_beta1 = " << format_double(cfg.adam_beta1) << '\n'
      << "adam_beta2 = " << format_double(cfg.adam_beta2) << '\n'
      << "adam_eps = " << format_double(cfg.adam_eps) << '\n'
      << "optimizer = " << (cfg.optimizer == Optimizer::adam ? "adam" : "sgd") << '\n'
      << "iteration_unit = " << (cfg.iteration_unit == IterationUnit::epoch ? "epoch" : "query") << '\n'
      << "select_best = " << (cfg.select_best ? "true" : "false") << '\n'
      << "precision = " << (cfg.precision == Precision::f32 ? "f32" : "f64") << '\n';
}

AdamState AdamState::zeros_like(const ModelParams& p) {
  return AdamState{csmlgcn::zeros_like(p), csmlgcn::zeros_like(p), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg) {
  auto p = arrays(params);
  const auto g = arrays(grads);
  if (g.size() != p.size()) throw Error("adam_step: gradient layout differs from parameters");
  if (cfg.optimizer == Optimizer::sgd) {
    for (std::size_t i = 0; i < p.size(); ++i) *p[i] -= cfg.learning_rate * *g[i];
    return;
  }
  auto m = arrays(state.first);
  auto v = arrays(state.second);
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = cfg.adam_beta1 * m[i]->array() + (1 - cfg.adam_beta1) * g[i]->array();
    v[i]->array() = cfg.adam_beta2 * v[i]->array() + (1 - cfg.adam_beta2) * g[i]->array().square();
    p[i]->array() -= cfg.learning_rate * (m[i]->array() / c1) /
                     ((v[i]->array() / c2).sqrt() + cfg.adam_eps);
  }
}

TrainingExample make_example(const MultiplexGraph& g, const Matrix& features,
                             const QueryPair& pair, std::optional<Index> candidate_hops,
                             std::shared_ptr<const PropagationGraph> full_graph) {
  TrainingExample ex;
  if (candidate_hops) {
    const Subgraph sub = khop_subgraph(g, pair.query, *candidate_hops);
    const Index n = sub.graph.node_count();
    ex.graph = std::make_shared<PropagationGraph>(sub.graph);
    ex.features.resize(n, features.cols());
    for (Index i = 0; i < n; ++i) ex.features.row(i) = features.row(sub.to_parent[i]);
    NodeSet local;
    for (Index u : pair.query) local.push_back(sub.local(u));
    ex.query = encode_query(local, n).as_column();
    ex.labels.assign(static_cast<std::size_t>(n), 0.0);
    for (Index u : pair.community) {
      if (sub.local(u) >= 0) ex.labels[sub.local(u)] = 1.0;
    }
    return ex;
  }
  ex.graph = full_graph ? std::move(full_graph) : std::make_shared<PropagationGraph>(g);
  ex.features = features;
  ex.query = encode_query(pair.query, g.node_count()).as_column();
  ex.labels.assign(static_cast<std::size_t>(g.node_count()), 0.0);
  for (Index u : pair.community) ex.labels[u] = 1.0;
  return ex;
}

namespace {

template <typename Scalar>
QueryGradient query_gradient_as(const ModelParams& params, const TrainingExample& ex,
                                const ForwardContext& ctx) {
  BasicTape<Scalar> tape;
  const auto vars = bind(tape, params, true);
  const auto x = tape.constant(ex.features.cast<Scalar>());
  const auto q = tape.constant(ex.query.cast<Scalar>());
  const auto pass = model_forward(*ex.graph, x, q, vars, ctx);
  const auto loss = bce_loss(pass.psi, ex.labels);
  tape.backward(loss);
  return QueryGradient{static_cast<double>(loss.value()(0, 0)), gradients(tape, vars)};
}

}  // namespace

QueryGradient query_gradient(const ModelParams& params, const TrainingExample& ex,
                             const ForwardContext& ctx, Precision precision) {
  return precision == Precision::f32 ? query_gradient_as<float>(params, ex, ctx)
                                     : query_gradient_as<double>(params, ex, ctx);
}

namespace {

double validation_f1(const MultiplexGraph& g, const Matrix& features, const ModelParams& params,
                     std::span<const QueryPair> queries, const TrainConfig& cfg) {
  if (queries.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Predictor model(g, features, params, cfg.candidate_hops);
  double total = 0;
  for (const auto& pair : queries) {
    const Community c = identify_community(model, pair.query, cfg.eta_default);
    total += f1_score(c.members, pair.community).f1;
  }
  return total / static_cast<double>(queries.size());
}

void check_pair(const QueryPair& pair, Index n) {
  if (pair.query.empty()) throw Error("training query with no nodes");
  NodeSet community = pair.community;
  std::sort(community.begin(), community.end());
  for (Index u : pair.query) {
    if (u < 0 || u >= n) throw Error("query node out of range");
    if (!std::binary_search(community.begin(), community.end(), u)) {
      throw Error("ground-truth community does not contain query node " + std::to_string(u));
    }
  }
}

}  // namespace

TrainResult train(const MultiplexGraph& g, const Matrix& features,
                  std::span<const QueryPair> train_queries,
                  std::span<const QueryPair> validation_queries, const TrainConfig& cfg,
                  const ModelParams* initial) {
  cfg.validate();
  if (features.rows() != g.node_count()) throw Error("feature rows do not match the graph");
  retain_heap();
  Rng rng(cfg.seed);
  TrainResult result;
  result.params = initial ? *initial : init_params(cfg.architecture(features.cols(), g.layer_count()), rng);
  validate_params(result.params, features.cols(), g.layer_count());

  std::vector<QueryPair> val;
  for (const auto& pair : validation_queries) {
    if (!pair.community.empty()) val.push_back(pair);
  }

  auto full = std::make_shared<const PropagationGraph>(g);
  std::vector<TrainingExample> examples;
  for (std::size_t i = 0; i < train_queries.size(); ++i) {
    const auto& pair = train_queries[i];
    if (pair.community.empty()) {
      std::cerr << "warning: training query " << i << " has no ground truth; skipped\n";
      continue;
    }
    check_pair(pair, g.node_count());
    examples.push_back(make_example(g, features, pair, cfg.candidate_hops, full));
  }
  if (examples.empty() && cfg.epochs > 0) throw Error("no usable training queries");

  AdamState state = AdamState::zeros_like(result.params);
  const ForwardContext ctx{Mode::train, cfg.dropout_rate, &rng};
  double best_f1 = -1;
  ModelParams best;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle before the first update

  auto step = [&](std::size_t k, Index iteration) {
    QueryGradient qg = query_gradient(result.params, examples[k], ctx, cfg.precision);
    if (!std::isfinite(qg.loss)) {
      throw Error("non-finite loss at iteration " + std::to_string(iteration) + " on training query " +
                  std::to_string(k));
    }
    adam_step(result.params, qg.grads, state, cfg);
    return qg.loss;
  };

  for (Index it = 0; it < cfg.epochs; ++it) {
    const auto start = std::chrono::steady_clock::now();
    double loss = 0;
    if (cfg.iteration_unit == IterationUnit::epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k : order) loss += step(k, it);
    } else {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      loss = step(order[cursor++], it);
    }
    const double f1 = validation_f1(g, features, result.params, val, cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.record.loss.push_back(loss);
    result.record.validation_f1.push_back(f1);
    result.record.seconds.push_back(secs);
    if (cfg.select_best && !val.empty() && f1 > best_f1) {
      best_f1 = f1;
      best = result.params;
      result.record.best_iteration = it;
    }
  }
  if (result.record.best_iteration >= 0) result.params = std::move(best);
  return result;
}

void write_training_record(std::ostream& out, const TrainingRecord& record, bool timing) {
  out << "iteration,loss,validation_f1,seconds\n";
  out.precision(17);
  for (std::size_t i = 0; i < record.size(); ++i) {
    out << i + 1 << ',' << record.loss[i] << ',';
    if (std::isnan(record.validation_f1[i])) out << "nan";
    else out << record.validation_f1[i];
    out << ',' << (timing ? record.seconds[i] : 0.0) << '\n';
  }
}

}  // namespace csmlgcn
