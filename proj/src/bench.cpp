#include "csmlgcn/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <numeric>
#include <ostream>
#include <set>

namespace csmlgcn {

QuerySplit make_splits(std::vector<QueryPair> pairs, SplitRatio ratio, std::uint64_t seed) {
  if (pairs.size() < 3) throw Error("make_splits: need at least 3 query pairs");
  if (ratio[0] < 0 || ratio[1] < 0 || ratio[2] < 0 || ratio[0] + ratio[1] + ratio[2] <= 0) {
    throw Error("make_splits: invalid ratio");
  }
  Rng rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const Index n = static_cast<Index>(pairs.size());
  const Index total = ratio[0] + ratio[1] + ratio[2];
  const Index n_val = n * ratio[1] / total;
  const Index n_test = n * ratio[2] / total;
  const Index n_train = n - n_val - n_test;

  QuerySplit split;
  auto it = std::make_move_iterator(pairs.begin());
  split.train.assign(it, it + n_train);
  split.validation.assign(it + n_train, it + n_train + n_val);
  split.test.assign(it + n_train + n_val, std::make_move_iterator(pairs.end()));
  return split;
}

void SynthSpec::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (node_count < 1) throw Error("synth: node_count must be positive");
  if (community_count < 1 || community_count > node_count) {
    throw Error("synth: community_count must lie in [1, node_count]");
  }
  if (layer_count < 0 || noise_layers < 0 || layer_count + noise_layers < 1) {
    throw Error("synth: need at least one layer");
  }
  if (!prob(p_in) || !prob(p_out) || !prob(p_noise) || !prob(flip_probability)) {
    throw Error("synth: probabilities must lie in [0, 1]");
  }
  if (max_pairs < 0) throw Error("synth: max_pairs must be >= 0");
}

SyntheticData gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  const Index n = spec.node_count, k = spec.community_count;
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  SyntheticData data;
  data.membership.resize(static_cast<std::size_t>(n));
  data.communities.resize(static_cast<std::size_t>(k));
  for (Index u = 0; u < n; ++u) {
    const Index c = u * k / n;
    data.membership[u] = c;
    data.communities[c].push_back(u);
  }

  const Index layers = spec.layer_count + spec.noise_layers;
  data.graph = MultiplexGraph(n, layers);
  for (Index r = 0; r < layers; ++r) {
    const bool signal = r < spec.layer_count;
    for (Index u = 0; u < n; ++u) {
      for (Index v = u + 1; v < n; ++v) {
        const double p = !signal ? spec.p_noise
                         : data.membership[u] == data.membership[v] ? spec.p_in
                                                                    : spec.p_out;
        if (coin(rng) < p) data.graph.add_edge(r, u, v);
      }
    }
  }

  if (spec.attribute_mode == AttributeMode::community) {
    Matrix x = Matrix::Zero(n, k);
    for (Index u = 0; u < n; ++u) {
      for (Index c = 0; c < k; ++c) {
        const bool on = data.membership[u] == c;
        x(u, c) = (coin(rng) < spec.flip_probability) != on ? 1.0 : 0.0;
      }
    }
    data.graph.set_attributes(std::move(x));
  }

  const Index wanted = std::min(n, spec.max_pairs);
  std::set<NodeSet> seen;
  std::uniform_int_distribution<Index> seed_count(1, 3);
  for (Index i = 0; i < wanted; ++i) {
    const NodeSet& members = data.communities[i % k];
    for (int attempt = 0; attempt < 100; ++attempt) {
      const Index s = std::min<Index>(seed_count(rng), static_cast<Index>(members.size()));
      NodeSet pool = members;
      // Partial Fisher-Yates: the first s entries become the sample.
      for (Index j = 0; j < s; ++j) {
        std::uniform_int_distribution<Index> pick(j, static_cast<Index>(pool.size()) - 1);
        std::swap(pool[j], pool[pick(rng)]);
      }
      NodeSet query(pool.begin(), pool.begin() + s);
      std::sort(query.begin(), query.end());
      if (seen.insert(query).second) {
        data.pairs.push_back(QueryPair{std::move(query), members});
        break;
      }
    }
  }
  return data;
}

EvalReport run_eval(const MultiplexGraph& g, const ScoreFn& scores,
                    std::span<const QueryPair> test, double eta) {
  EvalReport report;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& pair = test[i];
    const auto start = std::chrono::steady_clock::now();
    const Community c = identify_community(g, scores(pair.query), pair.query, eta);
    const double millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    EvalRow row;
    row.query_id = static_cast<Index>(i);
    row.score = f1_score(c.members, pair.community);
    row.community_size = static_cast<Index>(c.members.size());
    row.millis = millis;
    report.rows.push_back(row);
  }
  if (!report.rows.empty()) {
    for (const auto& row : report.rows) {
      report.mean_f1 += row.score.f1;
      report.mean_size += static_cast<double>(row.community_size);
      report.mean_millis += row.millis;
    }
    const double m = static_cast<double>(report.rows.size());
    report.mean_f1 /= m;
    report.mean_size /= m;
    report.mean_millis /= m;
  }
  return report;
}

EvalReport run_eval(const Predictor& model, std::span<const QueryPair> test, double eta) {
  return run_eval(
      model.graph(), [&](std::span<const Index> q) { return model.infer(q); }, test, eta);
}

namespace {

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_metrics_csv(std::ostream& out, const EvalReport& report, bool timing) {
  out << "query_id,f1,precision,recall,community_size,millis\n";
  for (const auto& row : report.rows) {
    out << row.query_id << ',' << num(row.score.f1) << ',' << num(row.score.precision) << ','
        << num(row.score.recall) << ',' << row.community_size << ','
        << num(timing ? row.millis : 0.0) << '\n';
  }
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "eta") return AblationAxis::eta;
  if (name == "epochs") return AblationAxis::epochs;
  if (name == "dropout") return AblationAxis::dropout;
  throw Error("unknown ablation axis '" + name + "' (expected eta, epochs or dropout)");
}

std::vector<AblationRow> run_ablation(AblationAxis axis, std::span<const double> values,
                                      const TrainConfig& config, const AblationData& data) {
  if (values.empty()) throw Error("run_ablation: no values");
  if (data.graph == nullptr) throw Error("run_ablation: no graph");
  const MultiplexGraph& g = *data.graph;
  auto fit = [&](const TrainConfig& cfg) {
    auto trained = train(g, data.features, data.split.train, data.split.validation, cfg);
    return Predictor(g, data.features, std::move(trained.params), cfg.candidate_hops);
  };

  std::vector<AblationRow> rows;
  if (axis == AblationAxis::eta) {
    const Predictor model = fit(config);
    for (double eta : values) {
      const auto report = run_eval(model, data.split.test, eta);
      rows.push_back({eta, report.mean_f1, report.mean_size});
    }
    return rows;
  }
  for (double value : values) {
    TrainConfig cfg = config;
    if (axis == AblationAxis::epochs) {
      if (value < 0 || value != static_cast<double>(static_cast<Index>(value))) {
        throw Error("run_ablation: epoch values must be nonnegative integers");
      }
      cfg.epochs = static_cast<Index>(value);
    } else {
      cfg.dropout_rate = value;
    }
    const Predictor model = fit(cfg);
    const auto report = run_eval(model, data.split.test, cfg.eta_default);
    rows.push_back({value, report.mean_f1, report.mean_size});
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "value,mean_f1,mean_size\n";
  for (const auto& row : rows) {
    out << num(row.value) << ',' << num(row.mean_f1) << ',' << num(row.mean_size) << '\n';
  }
}

std::vector<double> mean_attention(const Predictor& model, std::span<const QueryPair> queries) {
  const Index views = model.graph().layer_count();
  Vector total = Vector::Zero(views);
  double rows = 0;
  for (const auto& pair : queries) {
    const MembershipScores s = model.infer(pair.query);
    total += s.alpha.colwise().sum().transpose();
    rows += static_cast<double>(s.alpha.rows());
  }
  std::vector<double> out(static_cast<std::size_t>(views), 0.0);
  if (rows > 0) {
    for (Index r = 0; r < views; ++r) out[r] = total(r) / rows;
  }
  return out;
}

}  // namespace csmlgcn
