// kgformer: train, evaluate, predict and run diagnostics.
//
// Exit codes: 0 success, 1 internal failure, 2 user error.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgf/config.hpp"
#include "kgf/diagnostics.hpp"
#include "kgf/errors.hpp"
#include "kgf/eval.hpp"
#include "kgf/training.hpp"
#include "kgf/wl.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kgf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUser = 2;

// Thrown for bad command-line input that is not a library error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

// --set section.key=value
void apply_override(RunConfig& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  const auto dot = kv.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw UsageError("--set expects section.key=value, got '" + kv + "'");
  }
  apply_setting(cfg, kv.substr(0, dot), kv.substr(dot + 1, eq - dot - 1), kv.substr(eq + 1));
}

SplitMode parse_mode(const std::string& s) {
  if (s == "transductive") return SplitMode::kTransductive;
  if (s == "inductive") return SplitMode::kInductive;
  throw UsageError("--mode must be transductive or inductive");
}

DatasetSplit load_checked(const fs::path& dir, SplitMode mode) {
  if (dir.empty()) throw UsageError("no dataset given (--dataset or [dataset] path)");
  if (!fs::is_directory(dir)) throw UsageError("dataset directory not found: " + dir.string());
  return load_dataset(dir, mode);
}

// The checkpoint's vocabularies must describe the dataset it is used with.
void check_vocab(const Checkpoint& ckpt, const DatasetSplit& ds) {
  if (!(ckpt.relations == ds.relations)) {
    throw UsageError("dataset relations do not match the checkpoint vocabulary");
  }
  if (ds.mode == SplitMode::kTransductive && !(ckpt.entities == ds.entities)) {
    throw UsageError("dataset entities do not match the checkpoint vocabulary");
  }
}

json metrics_json(const MetricsReport& m) {
  return {{"mrr", m.mrr}, {"hits1", m.hits1}, {"hits3", m.hits3}, {"hits10", m.hits10}, {"count", m.count}};
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string dataset;
  std::string mode;
  std::string out;
  std::string resume;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> threads;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_config_file(a.config);
  for (const auto& kv : a.sets) apply_override(cfg, kv);
  if (!a.dataset.empty()) cfg.dataset = a.dataset;
  if (!a.mode.empty()) cfg.mode = parse_mode(a.mode);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.threads) cfg.train.threads = *a.threads;
  cfg.model.validate();
  cfg.train.validate();
  for (const auto& w : grid_warnings(cfg.model, cfg.train)) warn(w + " (allowed, but not in the searched grid)");

  const DatasetSplit ds = load_checked(cfg.dataset, cfg.mode);
  const TrainingData data = prepare_training_data(ds);
  fs::create_directories(cfg.output_dir);
  {
    std::ofstream out(cfg.output_dir / "config.cfg");
    out << format_config(cfg);
  }

  std::optional<ModelParams> params;
  AdamState adam;
  TrainProgress progress = TrainProgress::start(cfg.train.seed);
  if (!a.resume.empty()) {
    Checkpoint c = load_checkpoint(a.resume);
    if (format_model_train(c.model_config, TrainConfig{}) != format_model_train(cfg.model, TrainConfig{})) {
      throw UsageError("--resume checkpoint was trained with a different model configuration");
    }
    check_vocab(c, ds);
    params.emplace(restore_params(c));
    adam = std::move(c.adam);
    progress = std::move(c.progress);
    progress.finished = false;
  } else {
    Rng init = make_stream(cfg.train.seed, "init");
    params.emplace(cfg.model, data.graph.num_relations(), init);
  }

  std::ofstream log(cfg.output_dir / "metrics.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  TrainHooks hooks;
  hooks.on_record = [&](const MetricsRecord& r) {
    const std::string line = to_json_line(r);
    log << line << "\n";
    log.flush();
    if (!a.quiet) std::cout << line << "\n";
  };
  hooks.on_epoch_end = [&](const ModelParams& p, const AdamState& st, const TrainProgress& pr, bool is_best) {
    const Checkpoint c = make_checkpoint(p, cfg.train, st, pr, ds.entities, ds.relations);
    save_checkpoint(cfg.output_dir / "last.ckpt", c);
    if (is_best) save_checkpoint(cfg.output_dir / "best.ckpt", c);
  };
  const TrainResult res = train(data, *params, cfg.train, adam, progress, hooks);
  if (!a.quiet) {
    std::cerr << "trained " << res.epochs_run << " epochs; best valid MRR " << res.best_valid_mrr
              << " at epoch " << res.best_epoch << "; outputs in " << cfg.output_dir.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string mode = "transductive";
  std::string split = "test";
  std::string per_query;
  std::uint64_t seed = 0;
  std::size_t noise_seeds = 1;
  std::size_t threads = 1;
  bool raw = false;
  bool tail_only = false;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const DatasetSplit ds = load_checked(a.dataset, parse_mode(a.mode));
  check_vocab(ckpt, ds);
  const ModelParams params = restore_params(ckpt);
  const auto split = prepare_eval_split(ds, a.split, !a.tail_only);
  if (a.noise_seeds == 0) throw UsageError("--noise-seeds must be at least 1");

  std::ofstream per_query;
  if (!a.per_query.empty()) {
    per_query.open(a.per_query);
    if (!per_query) throw UsageError("cannot write " + a.per_query);
  }
  const Vocabulary& ents = ds.mode == SplitMode::kInductive && a.split == "test" ? *ds.inference_entities : ds.entities;
  const auto nb = static_cast<RelationId>(ds.num_base_relations());
  auto rel_name = [&](RelationId r) {
    return r < nb ? ds.relations.token(r) : "inverse:" + ds.relations.token(r - nb);
  };

  std::vector<double> mrrs;
  for (std::size_t s = 0; s < a.noise_seeds; ++s) {
    EvalOptions opt;
    opt.noise_seed = a.seed + s;
    opt.filtered = !a.raw;
    opt.threads = a.threads;
    opt.both_directions = !a.tail_only;
    const EvalResult res = evaluate(split->graph, split->queries, params, opt);
    json j = {{"split", a.split}, {"noise_seed", opt.noise_seed}, {"filtered", opt.filtered}};
    j.update(metrics_json(res.report));
    std::cout << j.dump() << "\n";
    mrrs.push_back(res.report.mrr);
    if (per_query.is_open()) {
      for (const QueryRecord& r : res.records) {
        per_query << json{{"noise_seed", opt.noise_seed}, {"head", ents.token(r.head)},
                          {"relation", rel_name(r.relation)}, {"gold", ents.token(r.gold)}, {"rank", r.rank}}
                         .dump()
                  << "\n";
      }
    }
  }
  if (mrrs.size() > 1) {
    const double mean = std::accumulate(mrrs.begin(), mrrs.end(), 0.0) / static_cast<double>(mrrs.size());
    double var = 0.0;
    for (double m : mrrs) var += (m - mean) * (m - mean);
    var /= static_cast<double>(mrrs.size() - 1);
    std::cout << json{{"split", a.split}, {"noise_seeds", mrrs.size()}, {"mrr_mean", mean}, {"mrr_std", std::sqrt(var)}}.dump()
              << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct QueryArgs {
  std::string checkpoint;
  std::string dataset;
  std::string mode = "transductive";
  std::string head;
  std::string relation;
  bool inverse = false;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

struct LoadedQuery {
  Checkpoint ckpt;
  DatasetSplit ds;
  std::unique_ptr<EvalSplit> split;
  EntityId head = 0;
  RelationId relation = 0;
};

LoadedQuery load_query(const QueryArgs& a) {
  LoadedQuery q{load_checkpoint(a.checkpoint), load_checked(a.dataset, parse_mode(a.mode)), nullptr, 0, 0};
  check_vocab(q.ckpt, q.ds);
  q.split = prepare_eval_split(q.ds, "train");
  q.head = q.ds.entities.at(a.head);
  q.relation = q.ds.relations.at(a.relation);
  if (a.inverse) q.relation += static_cast<RelationId>(q.ds.num_base_relations());
  return q;
}

ForwardInputs query_inputs(const LoadedQuery& q, std::span<const Tensor> noise) {
  ForwardInputs in;
  in.edges = q.split->graph.edge_arrays();
  in.num_entities = q.split->graph.num_entities();
  in.head = q.head;
  in.relation = q.relation;
  in.noise = noise;
  return in;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

int cmd_predict(const QueryArgs& a) {
  const LoadedQuery q = load_query(a);
  const ModelParams params = restore_params(q.ckpt);
  std::size_t k = a.k;
  if (k > q.ds.num_entities()) {
    warn("k = " + std::to_string(k) + " exceeds the " + std::to_string(q.ds.num_entities()) +
         " entities; showing all of them");
    k = q.ds.num_entities();
  }
  Rng noise_rng = make_stream(a.seed, "eval-noise");
  const auto noise = draw_noise(params.config(), q.ds.num_entities(), noise_rng);
  const auto scores = score_all(params, query_inputs(q, noise));
  std::size_t rank = 0;
  for (std::size_t e : top_k(scores, k)) {
    std::cout << ++rank << "\t" << q.ds.entities.token(static_cast<EntityId>(e)) << "\t" << scores[e] << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// diagnose

int diag_kernel(std::size_t samples, std::size_t dim, std::uint64_t seed) {
  const KernelSweepReport r = kernel_error_sweep(samples, dim, seed);
  const bool pass = r.max_gap <= r.bound && std::abs(r.max_gap - r.supremum) <= 1e-3;
  std::cout << json{{"samples", r.samples}, {"dim", dim}, {"max_gap", r.max_gap}, {"at_cosine", r.max_gap_cos},
                    {"bound", r.bound}, {"supremum", r.supremum}, {"pass", pass}}
                   .dump()
            << "\n"
            << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitInternal;
}

int diag_gradcheck(std::uint64_t seed) {
  const GradCheckReport r = model_gradcheck(seed);
  for (const auto& e : r.entries) {
    std::cout << json{{"param", e.name}, {"count", e.count}, {"max_abs_error", e.max_abs_error},
                      {"max_rel_error", e.max_rel_error}, {"pass", e.passed}}
                     .dump()
              << "\n";
  }
  std::cout << "worst relative error " << r.worst_rel_error << " (tolerance " << r.tolerance << ")\n"
            << (r.passed ? "PASS" : "FAIL") << "\n";
  return r.passed ? kExitOk : kExitInternal;
}

int diag_scaling(const std::vector<std::size_t>& sizes, std::size_t dim, std::size_t reps, bool dense) {
  ModelConfig cfg;
  cfg.hidden_dim = dim;
  if (dense) cfg.kernel = KernelMode::kFullExponential;
  const ScalingReport r = scaling_benchmark(sizes, cfg, reps, 0);
  for (std::size_t i = 0; i < r.sizes.size(); ++i) {
    std::cout << json{{"entities", r.sizes[i]}, {"seconds", r.seconds[i]}}.dump() << "\n";
  }
  std::cout << json{{"kernel", to_string(cfg.kernel)}, {"linear_r2", r.fit.r2}, {"linear_slope", r.fit.slope},
                    {"quadratic_r2", r.quadratic_fit.r2}}
                   .dump()
            << "\n";
  return kExitOk;
}

int diag_wl(const std::string& dataset, const std::string& mode, const std::string& head, std::size_t rounds) {
  const DatasetSplit ds = load_checked(dataset, parse_mode(mode));
  const KnowledgeGraph g = KnowledgeGraph::build(ds.train, ds.num_entities(), ds.num_base_relations(), true);
  const EntityId h = ds.entities.at(head);
  const PairColoring c = rawl2_refine(g, h, rounds == 0 ? g.num_entities() : rounds);
  std::vector<std::vector<std::string>> classes(c.num_colors());
  for (std::size_t u = 0; u < c.colors.size(); ++u) {
    classes[c.colors[u]].push_back(ds.entities.token(static_cast<EntityId>(u)));
  }
  for (std::size_t col = 0; col < classes.size(); ++col) {
    std::cout << json{{"color", col}, {"size", classes[col].size()}, {"entities", classes[col]}}.dump() << "\n";
  }
  std::cout << json{{"head", head}, {"colors", c.num_colors()}, {"iterations", c.iterations}, {"stable", c.stable}}.dump()
            << "\n";
  return kExitOk;
}

int diag_attention(const QueryArgs& a) {
  const LoadedQuery q = load_query(a);
  const ModelParams params = restore_params(q.ckpt);
  Rng noise_rng = make_stream(a.seed, "eval-noise");
  const auto noise = draw_noise(params.config(), q.ds.num_entities(), noise_rng);
  const ForwardInputs in = query_inputs(q, noise);
  Tape tape(false);
  const ForwardState st = forward(tape, params, in);
  const std::size_t last = params.config().attention_layers - 1;
  const DenseAttentionResult att =
      dense_attention_oracle(st.query_repr[last].value(), st.value_repr[last].value(),
                             params.layers[last].heads.front(), params.config().kernel);
  const auto& s = st.scores.value();
  const std::vector<double> scores(s.values().begin(), s.values().end());
  for (std::size_t ans : top_k(scores, a.k)) {
    std::vector<double> row(att.attention.row(ans).begin(), att.attention.row(ans).end());
    row[ans] = -1.0;  // the self weight dominates every row; list the others
    json attended = json::array();
    for (std::size_t v : top_k(row, a.k)) {
      attended.push_back({{"entity", q.ds.entities.token(static_cast<EntityId>(v))}, {"weight", att.attention(ans, v)}});
    }
    std::cout << json{{"answer", q.ds.entities.token(static_cast<EntityId>(ans))}, {"score", scores[ans]},
                      {"self_weight", att.attention(ans, ans)}, {"attended", attended}}
                     .dump()
              << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_grid(std::size_t limit) {
  std::size_t count = 0;
  for (double lr : SearchGrid::kLearningRates)
    for (double wd : SearchGrid::kWeightDecays)
      for (std::size_t d : SearchGrid::kHiddenDims)
        for (std::size_t neg : SearchGrid::kNegatives)
          for (std::size_t l : SearchGrid::kLayers)
            for (std::size_t lq : SearchGrid::kLayers)
              for (std::size_t lv : SearchGrid::kLayers) {
                if (limit != 0 && count >= limit) return kExitOk;
                ++count;
                std::cout << "--set train.learning_rate=" << format_double(lr)
                          << " --set train.weight_decay=" << format_double(wd) << " --set model.hidden_dim=" << d
                          << " --set train.num_negatives=" << neg << " --set model.attention_layers=" << l
                          << " --set model.query_layers=" << lq << " --set model.value_layers=" << lv << "\n";
              }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph transformer: training, evaluation and diagnostics"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", ta.config, "Config file");
  train_cmd->add_option("--dataset", ta.dataset, "Dataset directory (overrides config)");
  train_cmd->add_option("--mode", ta.mode, "transductive | inductive");
  train_cmd->add_option("--out", ta.out, "Output directory");
  train_cmd->add_option("--seed", ta.seed, "Run seed");
  train_cmd->add_option("--epochs", ta.epochs, "Epoch cap");
  train_cmd->add_option("--threads", ta.threads, "Worker threads");
  train_cmd->add_option("--set", ta.sets, "Override, section.key=value (repeatable)");
  train_cmd->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train_cmd->add_flag("--quiet", ta.quiet, "Only write files");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--dataset", ea.dataset)->required();
  eval_cmd->add_option("--mode", ea.mode);
  eval_cmd->add_option("--split", ea.split, "train | valid | test");
  eval_cmd->add_option("--per-query", ea.per_query, "Write per-query ranks as JSON lines");
  eval_cmd->add_option("--seed", ea.seed, "First noise seed");
  eval_cmd->add_option("--noise-seeds", ea.noise_seeds, "Repeat with this many noise seeds");
  eval_cmd->add_option("--threads", ea.threads);
  eval_cmd->add_flag("--raw", ea.raw, "Unfiltered ranks");
  eval_cmd->add_flag("--tail-only", ea.tail_only, "Skip the inverse (head) queries");

  QueryArgs qa;
  auto add_query_opts = [&](CLI::App* c) {
    c->add_option("--checkpoint", qa.checkpoint)->required();
    c->add_option("--dataset", qa.dataset)->required();
    c->add_option("--mode", qa.mode);
    c->add_option("--head", qa.head, "Head entity token")->required();
    c->add_option("--relation", qa.relation, "Relation token")->required();
    c->add_flag("--inverse", qa.inverse, "Use the inverse of --relation");
    c->add_option("--seed", qa.seed, "Noise seed");
  };
  auto* predict_cmd = app.add_subcommand("predict", "Top-k tails for (head, relation, ?)");
  add_query_opts(predict_cmd);
  predict_cmd->add_option("-k,--k", qa.k, "Number of tails");

  auto* diag = app.add_subcommand("diagnose", "Audits and sweeps");
  diag->require_subcommand(1);
  std::size_t samples = 100000, dim = 32, reps = 5, rounds = 0;
  std::uint64_t dseed = 0;
  bool dense = false;
  std::vector<std::size_t> sizes{1000, 2000, 4000, 8000};
  std::string wl_dataset, wl_mode = "transductive", wl_head;
  auto* d_kernel = diag->add_subcommand("kernel-error", "Approximate vs exponential kernel on unit vectors");
  d_kernel->add_option("--samples", samples);
  d_kernel->add_option("--dim", dim);
  d_kernel->add_option("--seed", dseed);
  auto* d_grad = diag->add_subcommand("gradcheck", "Finite-difference audit on a toy graph");
  d_grad->add_option("--seed", dseed);
  auto* d_scale = diag->add_subcommand("scaling", "Forward time against graph size");
  d_scale->add_option("--sizes", sizes);
  d_scale->add_option("--dim", dim);
  d_scale->add_option("--reps", reps);
  d_scale->add_flag("--dense", dense, "Use the full exponential kernel");
  auto* d_wl = diag->add_subcommand("wl", "Head-conditioned color classes of the training graph");
  d_wl->add_option("--dataset", wl_dataset)->required();
  d_wl->add_option("--mode", wl_mode);
  d_wl->add_option("--head", wl_head)->required();
  d_wl->add_option("--rounds", rounds, "0 = until stable");
  auto* d_att = diag->add_subcommand("attention", "Dense attention of the last layer for top answers");
  add_query_opts(d_att);
  d_att->add_option("--top", qa.k, "Answers and attended entities to list");

  std::size_t grid_limit = 0;
  auto* grid_cmd = app.add_subcommand("grid", "Enumerate the hyperparameter search grid as --set flags");
  grid_cmd->add_option("--limit", grid_limit, "Stop after this many lines (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*predict_cmd) return cmd_predict(qa);
    if (*grid_cmd) return cmd_grid(grid_limit);
    if (*d_kernel) return diag_kernel(samples, dim, dseed);
    if (*d_grad) return diag_gradcheck(dseed);
    if (*d_scale) return diag_scaling(sizes, dim, reps, dense);
    if (*d_wl) return diag_wl(wl_dataset, wl_mode, wl_head, rounds);
    if (*d_att) return diag_attention(qa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUser;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUser;
  } catch (const VocabularyError& e) {
    std::cerr << "unknown token: " << e.what() << "\n";
    return kExitUser;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitUser;
  } catch (const OracleScopeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
