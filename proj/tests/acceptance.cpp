// Acceptance report: one PASS/FAIL line per criterion, nonzero exit on any
// failure. The benchmark criteria train full-size models and take minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "csmlgcn/bench.hpp"
#include "fixtures.hpp"

using namespace csmlgcn;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng pick(seed);
    const Index n = 3 + static_cast<Index>(pick() % 8);
    const Index layers = 1 + static_cast<Index>(pick() % 3);
    const Index f = 1 + static_cast<Index>(pick() % 4);
    const Index width = 2 + static_cast<Index>(pick() % 3);
    const auto t = testing::tiny_problem(seed, n, layers, f, width);
    worst = std::max(worst, grad_check(testing::end_to_end_loss(t), testing::flatten(t.params), 1e-4)
                                .max_relative_error);
  }
  const double secs = seconds_since(start);
  report("gradient correctness", worst < 1e-4 && secs < 30,
         fmt("20 instances, max rel err %.2e, %.2f s", worst, secs));
}

void propagation_oracle() {
  Rng rng(100);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 12);
    const Index width = 1 + static_cast<Index>(rng() % 6);
    const auto g = testing::random_graph(n, 1, 0.4, rng);
    const PropagationGraph prop(g);
    const Matrix h = Matrix::Random(n, width);
    Tape tape;
    const Matrix sparse = neighbor_aggregate(tape.constant(h), prop.layers[0]).value();
    const Matrix dense = testing::dense_normalized_adjacency(g, 0) * h;
    worst = std::max(worst, (sparse - dense).cwiseAbs().maxCoeff());
  }
  report("propagation oracle", worst <= 1e-12, fmt("200 graphs, max abs diff %.2e", worst));
}

void attention_contracts() {
  Rng rng(200);
  double row_err = 0, single_err = 0, sym_err = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 10), d = 1 + static_cast<Index>(rng() % 5);
    const Index views = 1 + static_cast<Index>(rng() % 4);
    Tape tape;
    std::vector<Var> hs;
    AttentionVars a;
    for (Index r = 0; r < views; ++r) {
      hs.push_back(tape.constant(2.0 * Matrix::Random(n, d)));
      a.weights.push_back(tape.constant(Matrix::Random(d, d)));
    }
    const auto out = fuse<double>(hs, a);
    row_err = std::max(row_err, (out.alpha.value().rowwise().sum().array() - 1.0).abs().maxCoeff());
    if (views == 1) single_err = std::max(single_err, (out.alpha.value().array() - 1.0).abs().maxCoeff());

    std::vector<Var> same(static_cast<std::size_t>(views), hs[0]);
    AttentionVars shared;
    shared.weights.assign(static_cast<std::size_t>(views), a.weights[0]);
    const auto sym = fuse<double>(same, shared);
    sym_err = std::max(sym_err, (sym.alpha.value().array() - 1.0 / static_cast<double>(views)).abs().maxCoeff());
  }
  {
    Tape tape;
    const std::vector<Var> one{tape.constant(Matrix::Random(7, 3))};
    AttentionVars a;
    a.weights.push_back(tape.constant(Matrix::Random(3, 3)));
    single_err = std::max(single_err, (fuse<double>(one, a).alpha.value().array() - 1.0).abs().maxCoeff());
  }
  report("attention contracts", row_err <= 1e-9 && single_err <= 1e-9 && sym_err <= 1e-9,
         fmt("row sum err %.1e, L=1 err %.1e, symmetric err %.1e", row_err, single_err, sym_err));
}

void community_search_contracts() {
  Rng rng(300);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int oracle_miss = 0, containment = 0, disconnected = 0, non_monotone = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 12);
    const Index layers = 1 + static_cast<Index>(rng() % 3);
    const auto g = testing::random_graph(n, layers, 0.1 + 0.3 * unit(rng), rng);
    MembershipScores s;
    for (Index u = 0; u < n; ++u) s.psi.push_back(unit(rng));
    NodeSet query;
    const Index k = 1 + static_cast<Index>(rng() % std::min<Index>(3, n));
    while (static_cast<Index>(query.size()) < k) {
      const Index u = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
      if (std::find(query.begin(), query.end(), u) == query.end()) query.push_back(u);
    }
    const double eta = unit(rng);
    std::vector<bool> allowed(static_cast<std::size_t>(n));
    for (Index u = 0; u < n; ++u) allowed[u] = s.psi[u] >= eta;
    for (Index u : query) allowed[u] = true;

    const NodeSet c = identify_community(g, s, query, eta).members;
    oracle_miss += c != testing::component_oracle(g, query, allowed);
    for (Index u : query) containment += !std::binary_search(c.begin(), c.end(), u);
    std::vector<bool> inside(static_cast<std::size_t>(n), false);
    for (Index u : c) inside[u] = true;
    disconnected += testing::component_oracle(g, query, inside).size() != c.size();
    const NodeSet tighter = identify_community(g, s, query, eta + (1.0 - eta) * unit(rng)).members;
    non_monotone += !std::includes(c.begin(), c.end(), tighter.begin(), tighter.end());
  }
  report("community search contracts", oracle_miss + containment + disconnected + non_monotone == 0,
         "500 instances, oracle mismatches " + std::to_string(oracle_miss) + ", missing query nodes " +
             std::to_string(containment) + ", disconnected " + std::to_string(disconnected) +
             ", non-nested " + std::to_string(non_monotone));
}

struct BenchRun {
  SyntheticData data;
  Matrix features;
  QuerySplit split;
  TrainResult trained;
  double seconds = 0;
  double test_f1 = 0;
  double signal_alpha = 0;  // mean attention over signal views
  double noise_alpha = 0;   // mean attention over noise views, NaN without any
};

BenchRun run_benchmark(std::uint64_t seed, Index noise_layers) {
  SynthSpec spec;
  spec.node_count = 200;
  spec.community_count = 4;
  spec.layer_count = 3;
  spec.p_in = 0.3;
  spec.p_out = 0.05;
  spec.noise_layers = noise_layers;
  spec.p_noise = 0.1;
  spec.flip_probability = 0.1;
  spec.max_pairs = 100;
  spec.seed = seed;
  BenchRun run;
  run.data = gen_synthetic(spec);
  run.features = node_features(run.data.graph);
  run.split = make_splits(run.data.pairs, {50, 20, 30}, seed);
  TrainConfig cfg;
  cfg.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  run.trained = train(run.data.graph, run.features, run.split.train, run.split.validation, cfg);
  run.seconds = seconds_since(start);
  const Predictor model(run.data.graph, run.features, run.trained.params);
  run.test_f1 = run_eval(model, run.split.test, cfg.eta_default).mean_f1;
  const auto alpha = mean_attention(model, run.split.test);
  for (Index r = 0; r < 3; ++r) run.signal_alpha += alpha[r] / 3.0;
  run.noise_alpha = std::nan("");
  if (noise_layers > 0) {
    run.noise_alpha = 0;
    for (Index r = 3; r < 3 + noise_layers; ++r) run.noise_alpha += alpha[r] / static_cast<double>(noise_layers);
  }
  std::cout << "  seed " << seed << ", " << noise_layers << " noise layers: test F1 " << run.test_f1
            << ", train " << run.seconds << " s, signal alpha " << run.signal_alpha << ", noise alpha "
            << run.noise_alpha << std::endl;
  return run;
}

// Reference mean test F1 of seed 1, recorded when the benchmark was pinned.
constexpr double kPinnedF1 = 0.946;

void benchmark_criteria() {
  constexpr int kSeeds = 5;
  std::vector<BenchRun> clean, noisy;
  for (int s = 1; s <= kSeeds; ++s) clean.push_back(run_benchmark(static_cast<std::uint64_t>(s), 0));

  const BenchRun& ref = clean.front();
  report("planted-community recovery", ref.test_f1 >= 0.85 && std::abs(ref.test_f1 - kPinnedF1) <= 0.03 &&
                                           ref.seconds <= 120,
         fmt("seed 1 mean test F1 %.4f (pinned %.3f +- 0.03, floor 0.85), training %.1f s", ref.test_f1,
             kPinnedF1, ref.seconds));

  for (int s = 1; s <= kSeeds; ++s) noisy.push_back(run_benchmark(static_cast<std::uint64_t>(s), 2));
  double clean_f1 = 0, noisy_f1 = 0, signal = 0, noise = 0;
  int seeds_ordered = 0;
  for (int i = 0; i < kSeeds; ++i) {
    clean_f1 += clean[i].test_f1 / kSeeds;
    noisy_f1 += noisy[i].test_f1 / kSeeds;
    signal += noisy[i].signal_alpha / kSeeds;
    noise += noisy[i].noise_alpha / kSeeds;
    seeds_ordered += noisy[i].noise_alpha < noisy[i].signal_alpha;
  }
  report("noisy-view behavior", clean_f1 - noisy_f1 <= 0.05 && noise < signal,
         fmt("5 seeds: mean F1 %.4f clean vs %.4f noisy; mean alpha %.4f noise vs %.4f signal", clean_f1, noisy_f1,
             noise, signal) +
             " (" + std::to_string(seeds_ordered) + "/5 seeds individually lower)");

  {
    const Predictor model(ref.data.graph, ref.features, ref.trained.params);
    double lo = 1, hi = 0;
    for (int i = 0; i <= 8; ++i) {
      const double f1 = run_eval(model, ref.split.test, 0.3 + 0.05 * i).mean_f1;
      lo = std::min(lo, f1);
      hi = std::max(hi, f1);
    }
    const double low_eta = run_eval(model, ref.split.test, 0.05).mean_f1;
    const double high_eta = run_eval(model, ref.split.test, 0.95).mean_f1;
    report("ablation shape", hi - lo <= 0.05 && low_eta < lo && high_eta < lo,
           fmt("F1 over eta in [0.3, 0.7] spans [%.4f, %.4f]; eta 0.05 -> %.4f, eta 0.95 -> %.4f", lo, hi, low_eta,
               high_eta));
  }

  // The F1 clause is judged on the benchmark run (seed 1, no noise); the loss
  // clause on every run. Other runs' gaps are listed for context.
  auto gap = [](const BenchRun& run) {
    const auto& f1 = run.trained.record.validation_f1;
    return std::abs(f1[99] - f1[199]);
  };
  const double ref_gap = gap(ref);
  int loss_fell = 0, runs = 0, within = 0;
  std::string gaps;
  for (const auto* set : {&clean, &noisy}) {
    for (const auto& run : *set) {
      const auto& rec = run.trained.record;
      loss_fell += rec.loss[199] < rec.loss[0];
      within += gap(run) <= 0.05;
      gaps += fmt(runs == 0 ? "%.3f" : " %.3f", gap(run));
      ++runs;
    }
  }
  report("training sanity", ref_gap <= 0.05 && loss_fell == runs,
         fmt("benchmark val F1 %.4f at epoch 100 vs %.4f at epoch 200 (gap %.4f)",
             ref.trained.record.validation_f1[99], ref.trained.record.validation_f1[199], ref_gap) +
             "; gap <= 0.05 on " + std::to_string(within) + "/" + std::to_string(runs) + " runs [" + gaps +
             "]; final loss below first on " + std::to_string(loss_fell) + "/" + std::to_string(runs) + " runs");
}

int shell(const std::string& args) {
  const std::string cmd = std::string(CSMLGCN_CLI_BIN) + " " + args + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void pipeline_determinism() {
  const fs::path root = fs::temp_directory_path() / "csmlgcn_acceptance";
  fs::remove_all(root);
  std::string metrics[2];
  bool ok = true;
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = root / std::to_string(i);
    const std::string d = dir.string();
    ok = ok && shell("synth --pairs 100 --ratio 50:20:30 --seed 3 --out " + d + "/data") == 0;
    const std::string graph = " --edges " + d + "/data/edges.txt --attrs " + d + "/data/attrs.csv";
    ok = ok && shell("train" + graph + " --queries " + d + "/data/train.jsonl --val " + d +
                     "/data/val.jsonl --epochs 20 --seed 3 --no-timing --out " + d + "/model") == 0;
    ok = ok && shell("eval" + graph + " --model " + d + "/model/model.ckpt --queries " + d +
                     "/data/test.jsonl --no-timing --out " + d + "/eval") == 0;
    metrics[i] = slurp(dir / "eval" / "metrics.csv");
  }
  const bool same = ok && !metrics[0].empty() && metrics[0] == metrics[1];
  report("determinism", same,
         ok ? (same ? "two synth/train/eval runs wrote byte-identical metrics.csv (" +
                          std::to_string(metrics[0].size()) + " bytes)"
                    : std::string("metrics.csv differs between runs"))
            : std::string("a pipeline command failed"));
  fs::remove_all(root);
}

}  // namespace

int main() {
  try {
    gradient_correctness();
    propagation_oracle();
    attention_contracts();
    community_search_contracts();
    benchmark_criteria();
    pipeline_determinism();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
