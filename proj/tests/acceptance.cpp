// Acceptance run: one PASS / FAIL / SKIP line per criterion.
//
//   acceptance --data DIR [--only 1,2,...] [--report FILE]
//
// Exit status is nonzero when any criterion fails; skipped criteria do not
// count as failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "kgf/diagnostics.hpp"
#include "kgf/errors.hpp"
#include "kgf/eval.hpp"
#include "kgf/training.hpp"
#include "kgf/wl.hpp"

namespace fs = std::filesystem;
using namespace kgf;

namespace {

enum class Outcome { kPass, kFail, kSkip };

struct Result {
  Outcome outcome = Outcome::kFail;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

Result verdict(bool ok, std::string detail) { return {ok ? Outcome::kPass : Outcome::kFail, std::move(detail)}; }

// ---------------------------------------------------------------------------
// 1. linear attention vs dense oracle

Result attention_oracle() {
  constexpr double kTol = 1e-10;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_stream(1, "acceptance-attention");
  const std::size_t dims[] = {8, 16, 32};
  double worst = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    const std::size_t d = dims[i % 3];
    const std::size_t n = 1 + rng() % 50;
    ModelConfig cfg;
    cfg.hidden_dim = d;
    cfg.attention_layers = 1;
    ModelParams p(cfg, 1, rng);
    p.randomize_all(rng, 1.0 / std::sqrt(static_cast<double>(d)));
    const Tensor zq = normal_tensor(n, d, rng), zv = normal_tensor(n, d, rng);
    Tape tape(false);
    const Tensor lin = linear_attention(tape, tape.constant(zq), tape.constant(zv), p.layers[0].heads[0]).value();
    const auto dense = dense_attention_oracle(zq, zv, p.layers[0].heads[0], KernelMode::kApproximate);
    worst = std::max(worst, max_abs_diff(lin, dense.output));
  }
  const double t = seconds_since(t0);
  return verdict(worst <= kTol && t < 10.0, "200 instances, max |linear - dense| = " + fmt(worst, 3) +
                                                " (tol 1e-10), " + fmt(t, 3) + " s (limit 10 s)");
}

// 2. end-to-end gradient audit

Result gradient_audit() {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opt;
  opt.step = 1e-5;
  opt.tolerance = 1e-4;
  const GradCheckReport r = model_gradcheck(0, opt);
  const double t = seconds_since(t0);
  std::size_t failed = 0;
  for (const auto& e : r.entries) failed += e.passed ? 0 : 1;
  return verdict(r.passed && t < 60.0, std::to_string(r.entries.size()) + " parameter groups, worst rel err " +
                                           fmt(r.worst_rel_error, 3) + " (tol 1e-4), " + std::to_string(failed) +
                                           " failing, " + fmt(t, 3) + " s (limit 60 s)");
}

// 3. kernel gap sweep

Result kernel_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  const KernelSweepReport r = kernel_error_sweep(100000, 32, 0, true);
  const double t = seconds_since(t0);
  const bool ok = r.max_gap <= r.bound && std::abs(r.max_gap - r.supremum) <= 1e-3 && t < 5.0;
  return verdict(ok, "max gap " + fmt(r.max_gap, 7) + " <= e/2 = " + fmt(r.bound, 7) + ", |gap - (e-2)| = " +
                         fmt(std::abs(r.max_gap - r.supremum), 3) + " (tol 1e-3), " + fmt(t, 3) + " s (limit 5 s)");
}

// 4. metrics against a sort oracle

double sort_oracle_rank(const std::vector<double>& s, std::size_t gold, const std::vector<std::uint8_t>& mask) {
  std::vector<double> pool;
  for (std::size_t v = 0; v < s.size(); ++v)
    if (v != gold && !mask[v]) pool.push_back(s[v]);
  std::sort(pool.begin(), pool.end(), std::greater<>());
  const auto lo = std::lower_bound(pool.begin(), pool.end(), s[gold], std::greater<>());
  const auto hi = std::upper_bound(pool.begin(), pool.end(), s[gold], std::greater<>());
  return 1.0 + static_cast<double>(lo - pool.begin()) + 0.5 * static_cast<double>(hi - lo);
}

Result metric_correctness() {
  Rng rng = make_stream(4, "acceptance-metrics");
  std::uniform_int_distribution<int> level(0, 9);
  std::normal_distribution<double> nd;
  std::vector<double> ranks, oracle;
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    const std::size_t n = 2 + rng() % 200;
    std::vector<double> s(n);
    // Half the vectors use a coarse grid so ties are frequent.
    for (auto& v : s) v = i % 2 ? nd(rng) : level(rng) / 10.0;
    const std::size_t gold = rng() % n;
    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t v = 0; v < n; ++v) mask[v] = v != gold && rng() % 4 == 0;
    const double a = rank_answer(s, static_cast<EntityId>(gold), mask);
    const double b = sort_oracle_rank(s, gold, mask);
    mismatches += a != b;
    ranks.push_back(a);
    oracle.push_back(b);
  }
  const MetricsReport m = compute_metrics(ranks);
  double mrr = 0, h1 = 0, h3 = 0, h10 = 0;
  for (double r : oracle) {
    mrr += 1.0 / r;
    h1 += r <= 1;
    h3 += r <= 3;
    h10 += r <= 10;
  }
  const double n = static_cast<double>(oracle.size());
  const bool agg = m.mrr == mrr / n && m.hits1 == h1 / n && m.hits3 == h3 / n && m.hits10 == h10 / n;
  const MetricsReport ex = compute_metrics(std::vector<double>{1, 2, 4});
  const bool example = ex.mrr == (1.0 + 0.5 + 0.25) / 3.0 && std::abs(ex.mrr - 0.583333) < 5e-7;
  return verdict(mismatches == 0 && agg && example,
                 "10^4 vectors, " + std::to_string(mismatches) + " rank mismatches, aggregates " +
                     (agg ? "exact" : "differ") + ", ranks [1,2,4] -> MRR " + fmt(ex.mrr, 6));
}

// 5. forward-time scaling

Result complexity_scaling() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg;  // d = 32, two layers of everything
  const ScalingReport r = scaling_benchmark({1000, 2000, 4000, 8000}, cfg, 5, 0);
  const double t = seconds_since(t0);
  std::string times;
  for (std::size_t i = 0; i < r.sizes.size(); ++i) {
    times += (i ? ", " : "") + std::to_string(r.sizes[i]) + ":" + fmt(r.seconds[i] * 1e3, 4) + "ms";
  }
  return verdict(r.fit.r2 >= 0.98 && t < 300.0,
                 "linear fit R^2 = " + fmt(r.fit.r2, 5) + " (min 0.98) [" + times + "], " + fmt(t, 3) + " s");
}

// 6 and 9. UMLS training

struct UmlsRun {
  std::string checkpoint;
  std::vector<std::string> log;
  TrainResult result;
  double seconds = 0.0;
};

UmlsRun train_umls(const DatasetSplit& ds, const TrainingData& data) {
  TrainConfig t;  // library defaults: lr 5e-4, 64 negatives, 30 epochs
  t.seed = 0;
  t.target_valid_mrr = 0.40;
  t.record_wall_time = false;
  ModelConfig m;
  Rng init = make_stream(t.seed, "init");
  ModelParams params(m, data.graph.num_relations(), init);
  AdamState adam;
  TrainProgress progress = TrainProgress::start(t.seed);
  UmlsRun run;
  TrainHooks hooks;
  hooks.on_record = [&](const MetricsRecord& r) {
    run.log.push_back(to_json_line(r));
    std::cerr << "  umls " << run.log.back() << "\n";
  };
  const auto t0 = std::chrono::steady_clock::now();
  run.result = train(data, params, t, adam, progress, hooks);
  run.seconds = seconds_since(t0);
  run.checkpoint = serialize_checkpoint(make_checkpoint(params, t, adam, progress, ds.entities, ds.relations));
  return run;
}

// Expected filtered MRR of a uniformly random ranking.
double random_baseline(const std::vector<Query>& queries, std::size_t num_entities) {
  double total = 0.0;
  for (const Query& q : queries) {
    const std::size_t m = num_entities - (q.filter.size() - 1);
    double h = 0.0;
    for (std::size_t k = 1; k <= m; ++k) h += 1.0 / static_cast<double>(k);
    total += h / static_cast<double>(m);
  }
  return total / static_cast<double>(queries.size());
}

// ---------------------------------------------------------------------------
// 8. expressivity suite

struct SmallGraph {
  std::size_t n = 0;
  std::size_t relations = 0;
  std::vector<Triplet> facts;
};

// Every graph on 1-3 entities with one relation, every graph on 2 entities
// with two relations, then seeded random graphs on 4-8 entities with up to
// three relations, 2000 instances in total.
std::vector<SmallGraph> graph_suite(std::size_t total) {
  std::vector<SmallGraph> out;
  auto exhaustive = [&](std::size_t n, std::size_t nr) {
    std::vector<Triplet> slots;
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t h = 0; h < n; ++h)
        for (std::size_t t = 0; t < n; ++t)
          slots.push_back({static_cast<EntityId>(h), static_cast<RelationId>(r), static_cast<EntityId>(t)});
    for (std::size_t mask = 0; mask < (std::size_t{1} << slots.size()); ++mask) {
      SmallGraph g{n, nr, {}};
      for (std::size_t i = 0; i < slots.size(); ++i)
        if (mask >> i & 1) g.facts.push_back(slots[i]);
      out.push_back(std::move(g));
    }
  };
  exhaustive(1, 1);
  exhaustive(2, 1);
  exhaustive(3, 1);
  exhaustive(2, 2);
  Rng rng = make_stream(8, "acceptance-graphs");
  while (out.size() < total) {
    SmallGraph g;
    g.n = 4 + rng() % 5;
    g.relations = 1 + rng() % 3;
    const std::size_t m = rng() % (2 * g.n + 1);
    for (std::size_t i = 0; i < m; ++i) {
      g.facts.push_back({static_cast<EntityId>(rng() % g.n), static_cast<RelationId>(rng() % g.relations),
                         static_cast<EntityId>(rng() % g.n)});
    }
    out.push_back(std::move(g));
  }
  out.resize(total);
  return out;
}

Result expressivity() {
  constexpr std::size_t kSeeds = 10;
  constexpr double kEqualTol = 1e-9;
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = graph_suite(2000);
  double worst_gap = 0.0;
  std::size_t unsound = 0, distinguished = 0, separated = 0, score_ties = 0;
  Rng pick = make_stream(8, "acceptance-heads");
  for (std::size_t gi = 0; gi < suite.size(); ++gi) {
    const SmallGraph& sg = suite[gi];
    const KnowledgeGraph g = KnowledgeGraph::build(sg.facts, sg.n, sg.relations, true);
    const auto h = static_cast<EntityId>(pick() % sg.n);
    const auto rq = static_cast<RelationId>(pick() % g.num_relations());
    for (std::size_t s = 0; s < kSeeds; ++s) {
      ModelConfig cfg;
      cfg.hidden_dim = 16;
      cfg.noise = NoiseMode::kDisabled;
      Rng rng = make_stream(gi * kSeeds + s, "acceptance-probe");
      ModelParams params(cfg, g.num_relations(), rng);
      params.randomize_all(rng, 0.5);
      const ProbeReport rep = expressivity_probe(g, h, rq, params, kEqualTol);
      worst_gap = std::max(worst_gap, rep.max_class_score_gap);
      unsound += rep.sound ? 0 : 1;
      score_ties += rep.distinguished_equal_scores;
      const auto& c = rep.coloring.colors;
      for (std::size_t u = 0; u < sg.n; ++u) {
        for (std::size_t v = u + 1; v < sg.n; ++v) {
          if (c[u] == c[v]) continue;
          ++distinguished;
          double diff = 0.0;
          for (std::size_t k = 0; k < rep.value_repr.cols(); ++k) {
            diff = std::max(diff, std::abs(rep.value_repr(u, k) - rep.value_repr(v, k)));
          }
          separated += diff > kEqualTol;
        }
      }
    }
  }
  const double t = seconds_since(t0);
  const double frac = distinguished ? static_cast<double>(separated) / static_cast<double>(distinguished) : 1.0;
  return verdict(unsound == 0 && frac >= 0.9 && t < 300.0,
                 std::to_string(suite.size()) + " graphs x " + std::to_string(kSeeds) +
                     " seeds: equal-color score gap max " + fmt(worst_gap, 3) + " (tol 1e-9, " +
                     std::to_string(unsound) + " violations); distinct value rows for " + fmt(100.0 * frac, 4) +
                     "% of " + std::to_string(distinguished) + " distinguished pair-draws (min 90%); " +
                     std::to_string(score_ties) + " score ties reported as warnings; " + fmt(t, 3) + " s");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string data_dir = "data";
  std::vector<int> only;
  app.add_option("--data", data_dir, "Directory holding umls/ (and optionally wn18rr_v1/)");
  std::string report_path;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--report", report_path, "Also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  std::ofstream report_file;
  if (!report_path.empty()) report_file.open(report_path);
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Result()>& fn) {
    if (!wanted(id)) return;
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {Outcome::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = r.outcome == Outcome::kPass ? "PASS" : r.outcome == Outcome::kFail ? "FAIL" : "SKIP";
    failures += r.outcome == Outcome::kFail;
    std::ostringstream line;
    line << "[" << tag << "] " << id << " " << name << ": " << r.detail;
    std::cout << line.str() << std::endl;
    if (report_file.is_open()) report_file << line.str() << std::endl;
  };

  report(1, "attention-oracle", attention_oracle);
  report(2, "gradient-audit", gradient_audit);
  report(3, "kernel-bound", kernel_bound);
  report(4, "metric-correctness", metric_correctness);
  report(5, "complexity-scaling", complexity_scaling);

  // 6 and 9 share the first training run.
  std::optional<UmlsRun> first;
  std::optional<DatasetSplit> umls;
  std::optional<TrainingData> umls_data;
  const fs::path umls_dir = fs::path(data_dir) / "umls";
  if (wanted(6) || wanted(9)) {
    if (fs::is_directory(umls_dir)) {
      umls = load_dataset(umls_dir, SplitMode::kTransductive);
      umls_data = prepare_training_data(*umls);
      first = train_umls(*umls, *umls_data);
    }
  }
  report(6, "umls-training", [&]() -> Result {
    if (!first) return {Outcome::kFail, "dataset missing: " + umls_dir.string()};
    const double base = random_baseline(umls_data->valid_queries, umls->num_entities());
    const double best = first->result.best_valid_mrr;
    const bool ok = best >= 0.40 && best >= 10.0 * base && first->result.epochs_run <= 30 && first->seconds <= 1800.0;
    return verdict(ok, "best filtered valid MRR " + fmt(best, 4) + " at epoch " +
                           std::to_string(first->result.best_epoch) + " (min 0.40; random baseline " + fmt(base, 4) +
                           ", ratio " + fmt(best / base, 3) + "x), " + std::to_string(first->result.epochs_run) +
                           " epochs, " + fmt(first->seconds, 4) + " s (limit 1800 s)");
  });

  report(7, "inductive-wn18rr-v1", [&]() -> Result {
    const fs::path dir = fs::path(data_dir) / "wn18rr_v1";
    const char* gate = std::getenv("KGF_EXTENDED");
    if (!fs::is_directory(dir)) return {Outcome::kSkip, "manual gate: " + dir.string() + " not present"};
    if (gate == nullptr || std::string(gate) != "1") return {Outcome::kSkip, "manual gate: set KGF_EXTENDED=1"};
    const DatasetSplit ds = load_dataset(dir, SplitMode::kInductive);
    const TrainingData data = prepare_training_data(ds);
    TrainConfig t;
    ModelConfig m;
    Rng init = make_stream(t.seed, "init");
    ModelParams params(m, data.graph.num_relations(), init);
    AdamState adam;
    TrainProgress progress = TrainProgress::start(t.seed);
    train(data, params, t, adam, progress);
    const auto split = prepare_eval_split(ds, "test");
    const EvalResult ev = evaluate(split->graph, split->queries, params, EvalOptions{});
    return verdict(std::abs(ev.report.mrr - 0.752) <= 0.10,
                   "test MRR " + fmt(ev.report.mrr, 4) + " (target 0.752 +- 0.10)");
  });

  report(8, "expressivity-soundness", expressivity);

  report(9, "determinism", [&]() -> Result {
    if (!first) return {Outcome::kFail, "dataset missing: " + umls_dir.string()};
    const UmlsRun second = train_umls(*umls, *umls_data);
    const bool same_ckpt = second.checkpoint == first->checkpoint;
    const bool same_log = second.log == first->log;
    return verdict(same_ckpt && same_log, std::string("checkpoints ") + (same_ckpt ? "byte-identical" : "DIFFER") +
                                              " (" + std::to_string(first->checkpoint.size()) + " bytes), logs " +
                                              (same_log ? "byte-identical" : "DIFFER") + " (" +
                                              std::to_string(first->log.size()) + " records)");
  });

  return failures == 0 ? 0 : 1;
}
