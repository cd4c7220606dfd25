#include "csmlgcn/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "csmlgcn/bench.hpp"
#include "csmlgcn/checkpoint.hpp"
#include "csmlgcn/graph.hpp"
#include "csmlgcn/query.hpp"
#include "csmlgcn/queries.hpp"
#include "csmlgcn/trainer.hpp"

namespace csmlgcn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

namespace {

struct Flags {
  std::string edges, attrs, queries, val, test, config, model, out = "csmlgcn-out";
  std::vector<std::string> query_strings;
  std::optional<std::uint64_t> seed;
  std::optional<double> eta, lr, dropout;
  std::optional<Index> epochs;
  std::optional<std::string> hops;
  bool no_timing = false;

  // ablate
  std::string axis, values;

  // synth
  SynthSpec synth;
  std::string attrs_mode = "community";
  std::string ratio = "150:100:100";
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) return;
  if (!fs::exists(path)) throw Error(std::string(what) + " file not found: " + path);
}

TrainConfig resolve_config(const Flags& f) {
  TrainConfig cfg;
  if (!f.config.empty()) {
    require_file(f.config, "config");
    cfg = read_config(f.config, cfg);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.eta) cfg.eta_default = *f.eta;
  if (f.lr) cfg.learning_rate = *f.lr;
  if (f.dropout) cfg.dropout_rate = *f.dropout;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.hops) set_config_value(cfg, "candidate_hops", *f.hops);
  cfg.validate();
  return cfg;
}

MultiplexGraph load_graph(const Flags& f) {
  require_file(f.edges, "edge");
  require_file(f.attrs, "attribute");
  std::optional<fs::path> attrs;
  if (!f.attrs.empty()) attrs = f.attrs;
  return load_multiplex(f.edges, attrs);
}

std::vector<QueryPair> load_pairs(const MultiplexGraph& g, const std::string& path, const char* what) {
  if (path.empty()) return {};
  require_file(path, what);
  return resolve_queries(g, read_query_file(path));
}

fs::path output_dir(const Flags& f) {
  fs::path dir(f.out);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

json config_json(const TrainConfig& cfg) {
  std::ostringstream text;
  write_config(text, cfg);
  json obj = json::object();
  std::istringstream lines(text.str());
  std::string key, eq, value;
  while (lines >> key >> eq >> value) obj[key] = value;
  return obj;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs, std::optional<std::uint64_t> seed,
                    const std::vector<fs::path>& outputs) {
  json m;
  m["command"] = command;
  m["config"] = config;
  json digests = json::object();
  for (const auto& in : inputs) {
    if (!in.empty()) digests[in] = file_digest(in);
  }
  m["inputs"] = digests;
  m["seed"] = seed ? json(*seed) : json(nullptr);
  json outs = json::array();
  for (const auto& o : outputs) outs.push_back(o.string());
  m["outputs"] = outs;
  m["timestamp"] = utc_timestamp();
  auto out = open_output(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

Predictor load_predictor(const Flags& f, const MultiplexGraph& g, TrainConfig* cfg_out) {
  require_file(f.model, "model");
  Checkpoint ckpt = load_checkpoint(f.model);
  Matrix features = node_features(g);
  if (features.cols() != ckpt.feature_dim) {
    throw Error("model expects " + std::to_string(ckpt.feature_dim) + " features, graph provides " +
                std::to_string(features.cols()));
  }
  if (cfg_out) *cfg_out = ckpt.config;
  return Predictor(g, std::move(features), std::move(ckpt.params), ckpt.config.candidate_hops);
}

int cmd_train(const Flags& f, std::ostream& out) {
  const TrainConfig cfg = resolve_config(f);
  const MultiplexGraph g = load_graph(f);
  const Matrix features = node_features(g);
  const auto train_pairs = load_pairs(g, f.queries, "query");
  const auto val_pairs = load_pairs(g, f.val, "validation query");
  const TrainResult result = train(g, features, train_pairs, val_pairs, cfg);

  const fs::path dir = output_dir(f);
  Checkpoint ckpt{result.params, cfg, features.cols(), g.node_labels(), g.layer_labels()};
  save_checkpoint(ckpt, dir / "model.ckpt");
  {
    auto csv = open_output(dir / "training.csv");
    write_training_record(csv, result.record, !f.no_timing);
  }
  write_manifest(dir, "train", config_json(cfg), {f.edges, f.attrs, f.queries, f.val, f.config},
                 cfg.seed, {dir / "model.ckpt", dir / "training.csv"});
  out << "trained " << result.record.size() << " iteration(s) on " << train_pairs.size()
      << " queries";
  if (!result.record.loss.empty()) out << "; final loss " << result.record.loss.back();
  if (result.record.best_iteration >= 0) {
    out << "; best validation F1 " << result.record.validation_f1[result.record.best_iteration]
        << " at iteration " << result.record.best_iteration + 1;
  }
  out << "\nwrote " << (dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_query(const Flags& f, std::ostream& out) {
  const MultiplexGraph g = load_graph(f);
  TrainConfig cfg;
  const Predictor model = load_predictor(f, g, &cfg);
  const double eta = f.eta.value_or(cfg.eta_default);

  std::vector<NodeSet> queries;
  for (const auto& q : f.query_strings) queries.push_back(resolve_nodes(g, split_list(q, ',')));
  for (auto& pair : load_pairs(g, f.queries, "query")) queries.push_back(std::move(pair.query));
  if (queries.empty()) throw CLI::ValidationError("query", "give --query or --queries");

  std::ostringstream lines;
  for (const auto& q : queries) {
    const auto start = std::chrono::steady_clock::now();
    const Community c = identify_community(model, q, eta);
    const double millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    json rec;
    json query = json::array(), members = json::array(), scores = json::object();
    for (Index u : q) query.push_back(g.node_labels()[u]);
    for (std::size_t i = 0; i < c.members.size(); ++i) {
      members.push_back(g.node_labels()[c.members[i]]);
      scores[g.node_labels()[c.members[i]]] = c.scores[i];
    }
    rec["query"] = query;
    rec["community"] = members;
    rec["scores"] = scores;
    rec["millis"] = f.no_timing ? 0.0 : millis;
    lines << rec.dump() << '\n';
  }
  out << lines.str();
  if (!f.out.empty() && f.out != "-") {
    const fs::path dir = output_dir(f);
    auto file = open_output(dir / "communities.jsonl");
    file << lines.str();
    json c = config_json(cfg);
    c["eta"] = eta;
    write_manifest(dir, "query", c, {f.model, f.edges, f.attrs, f.queries}, f.seed,
                   {dir / "communities.jsonl"});
  }
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const MultiplexGraph g = load_graph(f);
  TrainConfig cfg;
  const Predictor model = load_predictor(f, g, &cfg);
  const double eta = f.eta.value_or(cfg.eta_default);
  const auto test = load_pairs(g, f.queries, "query");
  const EvalReport report = run_eval(model, test, eta);

  const fs::path dir = output_dir(f);
  {
    auto csv = open_output(dir / "metrics.csv");
    write_metrics_csv(csv, report, !f.no_timing);
  }
  json c = config_json(cfg);
  c["eta"] = eta;
  write_manifest(dir, "eval", c, {f.model, f.edges, f.attrs, f.queries}, f.seed, {dir / "metrics.csv"});
  out << "evaluated " << report.rows.size() << " queries: mean F1 " << report.mean_f1
      << ", mean community size " << report.mean_size << '\n';
  return kExitOk;
}

SplitRatio parse_ratio(const std::string& s) {
  const auto parts = split_list(s, ':');
  if (parts.size() != 3) throw CLI::ValidationError("--ratio", "expected train:val:test");
  SplitRatio r{};
  for (int i = 0; i < 3; ++i) r[i] = std::stoll(parts[i]);
  return r;
}

int cmd_synth(Flags f, std::ostream& out) {
  if (f.attrs_mode == "none") f.synth.attribute_mode = AttributeMode::none;
  else if (f.attrs_mode == "community") f.synth.attribute_mode = AttributeMode::community;
  else throw CLI::ValidationError("--attrs-mode", "expected 'none' or 'community'");
  if (f.seed) f.synth.seed = *f.seed;
  const SplitRatio ratio = parse_ratio(f.ratio);
  const SyntheticData data = gen_synthetic(f.synth);
  for (Index u = 0; u < data.graph.node_count(); ++u) {
    bool isolated = true;
    for (Index r = 0; r < data.graph.layer_count() && isolated; ++r) isolated = data.graph.degree(r, u) == 0;
    if (isolated) {
      throw Error("node " + std::to_string(u) + " has no edges in any layer; the edge-list format cannot carry it");
    }
  }

  const fs::path dir = output_dir(f);
  std::vector<fs::path> outputs{dir / "edges.txt", dir / "queries.jsonl", dir / "train.jsonl",
                                dir / "val.jsonl", dir / "test.jsonl", dir / "truth.txt"};
  {
    auto edges = open_output(dir / "edges.txt");
    write_edge_list(data.graph, edges);
  }
  if (data.graph.attributes()) {
    auto attrs = open_output(dir / "attrs.csv");
    write_attributes(data.graph, attrs);
    outputs.push_back(dir / "attrs.csv");
  }
  auto records = [&](const std::vector<QueryPair>& pairs) {
    std::vector<QueryRecord> recs;
    for (const auto& p : pairs) recs.push_back(to_record(data.graph, p));
    return recs;
  };
  {
    auto all = open_output(dir / "queries.jsonl");
    write_query_lines(all, records(data.pairs));
  }
  const QuerySplit split = make_splits(data.pairs, ratio, f.synth.seed);
  {
    auto tr = open_output(dir / "train.jsonl");
    write_query_lines(tr, records(split.train));
    auto va = open_output(dir / "val.jsonl");
    write_query_lines(va, records(split.validation));
    auto te = open_output(dir / "test.jsonl");
    write_query_lines(te, records(split.test));
  }
  {
    auto truth = open_output(dir / "truth.txt");
    for (Index u = 0; u < data.graph.node_count(); ++u) {
      truth << data.graph.node_labels()[u] << ' ' << data.membership[u] << '\n';
    }
  }
  json spec;
  spec["nodes"] = f.synth.node_count;
  spec["communities"] = f.synth.community_count;
  spec["layers"] = f.synth.layer_count;
  spec["p_in"] = f.synth.p_in;
  spec["p_out"] = f.synth.p_out;
  spec["noise_layers"] = f.synth.noise_layers;
  spec["p_noise"] = f.synth.p_noise;
  spec["attrs_mode"] = f.attrs_mode;
  spec["flip"] = f.synth.flip_probability;
  spec["pairs"] = f.synth.max_pairs;
  spec["ratio"] = f.ratio;
  write_manifest(dir, "synth", spec, {}, f.synth.seed, outputs);
  out << "wrote " << data.graph.node_count() << " nodes, " << data.graph.edge_count() << " edges in "
      << data.graph.layer_count() << " layers, " << data.pairs.size() << " query pairs ("
      << split.train.size() << "/" << split.validation.size() << "/" << split.test.size()
      << ") to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_ablate(const Flags& f, std::ostream& out) {
  const AblationAxis axis = parse_axis(f.axis);
  std::vector<double> values;
  for (const auto& v : split_list(f.values, ',')) values.push_back(std::stod(v));
  if (values.empty()) throw CLI::ValidationError("--values", "no values given");
  const TrainConfig cfg = resolve_config(f);
  const MultiplexGraph g = load_graph(f);
  AblationData data;
  data.graph = &g;
  data.features = node_features(g);
  data.split.train = load_pairs(g, f.queries, "query");
  data.split.validation = load_pairs(g, f.val, "validation query");
  data.split.test = load_pairs(g, f.test, "test query");
  const auto rows = run_ablation(axis, values, cfg, data);

  const fs::path dir = output_dir(f);
  {
    auto csv = open_output(dir / "ablation.csv");
    write_ablation_csv(csv, rows);
  }
  json c = config_json(cfg);
  c["axis"] = f.axis;
  write_manifest(dir, "ablate", c, {f.edges, f.attrs, f.queries, f.val, f.test, f.config}, cfg.seed,
                 {dir / "ablation.csv"});
  write_ablation_csv(out, rows);
  return kExitOk;
}

void add_graph_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--edges", f.edges, "Edge file: <layer> <src> <dst> per line")->required();
  cmd->add_option("--attrs", f.attrs, "Attribute CSV: node,f0,f1,...");
}

void add_train_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Key-value config file (flags override it)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--epochs", f.epochs, "Training iterations");
  cmd->add_option("--lr", f.lr, "Learning rate");
  cmd->add_option("--dropout", f.dropout, "Dropout rate");
  cmd->add_option("--hops", f.hops, "Candidate subgraph hops, or 'none'");
  cmd->add_option("--eta", f.eta, "Community threshold used for validation");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Query-driven multiplex GCN community search"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train a model on query/community pairs");
  add_graph_flags(train_cmd, f);
  train_cmd->add_option("--queries", f.queries, "Training queries (JSON lines)")->required();
  train_cmd->add_option("--val", f.val, "Validation queries (JSON lines)");
  add_train_flags(train_cmd, f);
  train_cmd->add_option("--out", f.out, "Output directory");
  train_cmd->add_flag("--no-timing", f.no_timing, "Write zero wall-clock columns");

  auto* query_cmd = app.add_subcommand("query", "Find the community of query nodes");
  add_graph_flags(query_cmd, f);
  query_cmd->add_option("--model", f.model, "Checkpoint file")->required();
  query_cmd->add_option("--query", f.query_strings, "Comma-separated node ids (repeatable)");
  query_cmd->add_option("--queries", f.queries, "Query file (JSON lines)");
  query_cmd->add_option("--eta", f.eta, "Membership threshold in [0, 1]");
  query_cmd->add_option("--seed", f.seed, "Recorded in the manifest");
  query_cmd->add_option("--out", f.out, "Output directory, '-' for stdout only")->default_str("-");
  query_cmd->add_flag("--no-timing", f.no_timing, "Report millis as 0");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on test queries");
  add_graph_flags(eval_cmd, f);
  eval_cmd->add_option("--model", f.model, "Checkpoint file")->required();
  eval_cmd->add_option("--queries", f.queries, "Test queries with communities")->required();
  eval_cmd->add_option("--eta", f.eta, "Membership threshold in [0, 1]");
  eval_cmd->add_option("--seed", f.seed, "Recorded in the manifest");
  eval_cmd->add_option("--out", f.out, "Output directory");
  eval_cmd->add_flag("--no-timing", f.no_timing, "Write 0 in the millis column");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-community multiplex benchmark");
  synth_cmd->add_option("--nodes", f.synth.node_count, "Node count")->capture_default_str();
  synth_cmd->add_option("--communities", f.synth.community_count, "Community count")->capture_default_str();
  synth_cmd->add_option("--layers", f.synth.layer_count, "Signal layers")->capture_default_str();
  synth_cmd->add_option("--p-in", f.synth.p_in, "Intra-community edge probability")->capture_default_str();
  synth_cmd->add_option("--p-out", f.synth.p_out, "Inter-community edge probability")->capture_default_str();
  synth_cmd->add_option("--noise-layers", f.synth.noise_layers, "Pure-noise layers")->capture_default_str();
  synth_cmd->add_option("--p-noise", f.synth.p_noise, "Noise-layer edge probability")->capture_default_str();
  synth_cmd->add_option("--attrs-mode", f.attrs_mode, "none or community")->capture_default_str();
  synth_cmd->add_option("--flip", f.synth.flip_probability, "Attribute flip probability")->capture_default_str();
  synth_cmd->add_option("--pairs", f.synth.max_pairs, "Upper bound on query pairs")->capture_default_str();
  synth_cmd->add_option("--ratio", f.ratio, "train:val:test split ratio")->capture_default_str();
  synth_cmd->add_option("--seed", f.seed, "Random seed");
  synth_cmd->add_option("--out", f.out, "Output directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "Sweep eta, epochs or dropout");
  add_graph_flags(ablate_cmd, f);
  ablate_cmd->add_option("--axis", f.axis, "eta, epochs or dropout")->required();
  ablate_cmd->add_option("--values", f.values, "Comma-separated values")->required();
  ablate_cmd->add_option("--queries", f.queries, "Training queries")->required();
  ablate_cmd->add_option("--val", f.val, "Validation queries");
  ablate_cmd->add_option("--test", f.test, "Test queries")->required();
  add_train_flags(ablate_cmd, f);
  ablate_cmd->add_option("--out", f.out, "Output directory");

  std::vector<std::string> argv_store;
  argv_store.push_back("csmlgcn");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(f, out);
    if (*query_cmd) {
      if (query_cmd->count("--out") == 0) f.out = "-";
      return cmd_query(f, out);
    }
    if (*eval_cmd) return cmd_eval(f, out);
    if (*synth_cmd) return cmd_synth(f, out);
    if (*ablate_cmd) return cmd_ablate(f, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace csmlgcn::cli
