#include "kgf/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "kgf/config.hpp"
#include "kgf/errors.hpp"

namespace kgf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes native doubles and expects a little-endian host");

namespace {

template <typename T, std::size_t N>
bool in_set(T v, const T (&set)[N]) {
  return std::find(std::begin(set), std::end(set), v) != std::end(set);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (eval_interval == 0) throw ConfigError("train.eval_interval must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta1/adam_beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
}

std::vector<std::string> grid_warnings(const ModelConfig& model, const TrainConfig& train) {
  std::vector<std::string> w;
  if (!in_set(train.learning_rate, SearchGrid::kLearningRates))
    w.push_back("learning_rate " + format_double(train.learning_rate) + " is outside {1e-4, 5e-4, 1e-3, 5e-3}");
  if (!in_set(train.weight_decay, SearchGrid::kWeightDecays))
    w.push_back("weight_decay " + format_double(train.weight_decay) + " is outside {0, 1e-6, 1e-5, 1e-4}");
  if (!in_set(model.hidden_dim, SearchGrid::kHiddenDims))
    w.push_back("hidden_dim " + std::to_string(model.hidden_dim) + " is outside {16, 32, 64}");
  if (!in_set(train.num_negatives, SearchGrid::kNegatives))
    w.push_back("num_negatives " + std::to_string(train.num_negatives) + " is outside {2^6, ..., 2^16}");
  const std::pair<const char*, std::size_t> layers[] = {{"attention_layers", model.attention_layers},
                                                       {"query_layers", model.query_layers},
                                                       {"value_layers", model.value_layers}};
  for (const auto& [name, v] : layers) {
    if (!in_set(v, SearchGrid::kLayers)) w.push_back(std::string(name) + " " + std::to_string(v) + " is outside {1, 2, 3}");
  }
  return w;
}

// ---------------------------------------------------------------------------

std::vector<EntityId> sample_negatives(EntityId gold, std::size_t k, Rng& rng, std::size_t num_entities) {
  if (k >= num_entities) {
    throw SamplingError("cannot draw " + std::to_string(k) + " negatives from " +
                        std::to_string(num_entities) + " entities");
  }
  // Floyd's algorithm over the n - 1 candidates; candidate c maps to entity
  // c if c < gold else c + 1.
  const std::size_t m = num_entities - 1;
  std::vector<EntityId> picked;
  picked.reserve(k);
  std::unordered_set<std::size_t> seen;
  seen.reserve(k * 2);
  for (std::size_t j = m - k; j < m; ++j) {
    std::uniform_int_distribution<std::size_t> dist(0, j);
    std::size_t c = dist(rng);
    if (seen.contains(c)) c = j;
    seen.insert(c);
    const auto e = static_cast<EntityId>(c);
    picked.push_back(e < gold ? e : e + 1);
  }
  return picked;
}

Var negative_sampling_loss(Var scores, EntityId gold, std::span<const EntityId> negatives) {
  if (scores.cols() != 1) throw DimensionError("negative_sampling_loss: scores must be n x 1, got " + to_string(scores.shape()));
  Var pos = clamp(gather_rows(scores, {static_cast<std::size_t>(gold)}), kScoreClamp, 1.0 - kScoreClamp);
  Var loss = scale(log(pos), -1.0);
  if (!negatives.empty()) {
    std::vector<std::size_t> idx(negatives.begin(), negatives.end());
    Var neg = clamp(gather_rows(scores, std::move(idx)), kScoreClamp, 1.0 - kScoreClamp);
    loss = sub(loss, sum(log(add_scalar(scale(neg, -1.0), 1.0))));
  }
  return loss;
}

AdamState AdamState::for_params(std::span<Parameter* const> params) {
  AdamState s;
  for (const Parameter* p : params) {
    s.first_moment.emplace_back(p->value.rows(), p->value.cols());
    s.second_moment.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const TrainConfig& cfg) {
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match parameter list");
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (m.shape() != p.value.shape()) throw ContractError("adam_step: moment shape mismatch for " + p.name);
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j] + cfg.weight_decay * p.value[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.value[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------

TrainProgress TrainProgress::start(std::uint64_t seed) {
  TrainProgress p;
  p.shuffle_rng = make_stream(seed, "shuffle");
  p.negative_rng = make_stream(seed, "negatives");
  p.noise_rng = make_stream(seed, "noise");
  return p;
}

std::string to_json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["loss"] = r.loss ? nlohmann::ordered_json(*r.loss) : nlohmann::ordered_json(nullptr);
  if (r.metrics) {
    j["mrr"] = r.metrics->mrr;
    j["hits1"] = r.metrics->hits1;
    j["hits3"] = r.metrics->hits3;
    j["hits10"] = r.metrics->hits10;
  } else {
    j["mrr"] = nullptr;
    j["hits1"] = nullptr;
    j["hits3"] = nullptr;
    j["hits10"] = nullptr;
  }
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

TrainingData prepare_training_data(const DatasetSplit& ds) {
  TrainingData data{KnowledgeGraph::build(ds.train, ds.num_entities(), ds.num_base_relations(), true),
                    {}, ds.train, {}};
  // Filtering for validation covers every split that shares its entity space.
  std::vector<const std::vector<Triplet>*> splits{&ds.train, &ds.valid};
  if (ds.mode == SplitMode::kTransductive) splits.push_back(&ds.test);
  data.filters = build_filter_sets(splits, ds.num_base_relations(), true);
  data.valid_queries = make_queries(ds.valid, ds.num_base_relations(), data.filters, true);
  return data;
}

namespace {

struct TrainQuery {
  Triplet fact;  // as a tail query: (head, relation, gold)
};

struct QueryJob {
  Triplet fact;
  std::vector<EntityId> negatives;
  std::vector<Tensor> noise;
  std::unique_ptr<Tape> tape;
  double loss = 0.0;
};

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

std::string norm_summary(const ModelParams& params) {
  std::vector<std::pair<double, std::string>> norms;
  for (const Parameter* p : params.all()) norms.emplace_back(p->value.l2_norm(), p->name);
  std::sort(norms.rbegin(), norms.rend());
  std::ostringstream os;
  for (std::size_t i = 0; i < std::min<std::size_t>(5, norms.size()); ++i) {
    os << (i ? ", " : "") << norms[i].second << "=" << norms[i].first;
  }
  return os.str();
}

}  // namespace

TrainResult train(const TrainingData& data, ModelParams& params, const TrainConfig& cfg,
                  AdamState& adam, TrainProgress& progress, const TrainHooks& hooks) {
  cfg.validate();
  const KnowledgeGraph& graph = data.graph;
  const std::size_t n = graph.num_entities();
  const auto nb = static_cast<RelationId>(graph.num_base_relations());
  if (cfg.num_negatives >= n) {
    throw ConfigError("train.num_negatives = " + std::to_string(cfg.num_negatives) + " needs more than " +
                      std::to_string(n) + " entities");
  }
  if (adam.first_moment.empty()) adam = AdamState::for_params(params.all());

  std::vector<Triplet> queries;
  queries.reserve(data.train_facts.size() * 2);
  for (const Triplet& t : data.train_facts) {
    queries.push_back(t);
    queries.push_back({t.tail, t.relation + nb, t.head});
  }

  const ModelConfig& mcfg = params.config();
  std::vector<Tensor> fixed_noise;
  if (mcfg.noise == NoiseMode::kFixedSeed) {
    Rng r = make_stream(cfg.seed, "fixed-noise");
    fixed_noise = draw_noise(mcfg, n, r);
  }

  TrainResult result;
  result.best_valid_mrr = progress.best_valid_mrr;
  result.best_epoch = progress.best_epoch;
  auto emit = [&](MetricsRecord rec) {
    if (!cfg.record_wall_time) rec.wall_ms = 0.0;
    if (hooks.on_record) hooks.on_record(rec);
    result.records.push_back(std::move(rec));
  };

  std::vector<std::size_t> order(queries.size());
  for (std::size_t epoch = progress.epochs_done + 1; epoch <= cfg.epochs && !progress.finished; ++epoch) {
    const double t0 = now_ms();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), progress.shuffle_rng);

    double loss_total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(e - b);

      // Random draws happen serially in batch order so the thread count
      // never changes the stream consumption.
      std::vector<QueryJob> jobs(e - b);
      for (std::size_t i = b; i < e; ++i) {
        QueryJob& job = jobs[i - b];
        job.fact = queries[order[i]];
        job.negatives = sample_negatives(job.fact.tail, cfg.num_negatives, progress.negative_rng, n);
        if (mcfg.noise == NoiseMode::kPerForward) job.noise = draw_noise(mcfg, n, progress.noise_rng);
      }
      auto run = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) {
          QueryJob& job = jobs[j];
          job.tape = std::make_unique<Tape>();
          ForwardInputs in;
          in.edges = graph.edge_arrays_without(job.fact);
          in.num_entities = n;
          in.head = job.fact.head;
          in.relation = job.fact.relation;
          in.noise = mcfg.noise == NoiseMode::kFixedSeed ? std::span<const Tensor>(fixed_noise)
                                                         : std::span<const Tensor>(job.noise);
          ForwardState st = forward(*job.tape, params, in);
          Var loss = negative_sampling_loss(st.scores, job.fact.tail, job.negatives);
          job.loss = loss.value()[0];
          job.tape->compute_gradients(scale(loss, inv_batch));
        }
      };
      const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, jobs.size()));
      if (threads == 1) {
        run(0, jobs.size());
      } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (jobs.size() + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
          const std::size_t lo = t * chunk, hi = std::min(jobs.size(), lo + chunk);
          if (lo < hi) pool.emplace_back(run, lo, hi);
        }
      }

      params.zero_grad();
      double batch_loss = 0.0;
      for (QueryJob& job : jobs) {
        job.tape->accumulate_parameter_grads();
        job.tape.reset();
        batch_loss += job.loss;
      }
      if (!std::isfinite(batch_loss)) {
        throw NonFiniteLossError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(b / cfg.batch_size) + "; largest parameter norms: " +
                                 norm_summary(params));
      }
      loss_total += batch_loss;
      adam_step(params.all(), adam, cfg);
    }
    progress.epochs_done = epoch;
    ++result.epochs_run;

    MetricsRecord train_rec;
    train_rec.epoch = epoch;
    train_rec.split = "train";
    train_rec.loss = loss_total / static_cast<double>(queries.size());
    train_rec.wall_ms = now_ms() - t0;
    emit(train_rec);

    bool is_best = false;
    if (epoch % cfg.eval_interval == 0 && !data.valid_queries.empty()) {
      const double v0 = now_ms();
      EvalOptions eo;
      eo.noise_seed = derive_seed(cfg.seed, "valid-noise");
      eo.threads = cfg.threads;
      const EvalResult ev = evaluate(graph, data.valid_queries, params, eo);
      MetricsRecord rec;
      rec.epoch = epoch;
      rec.split = "valid";
      rec.metrics = ev.report;
      rec.wall_ms = now_ms() - v0;
      emit(rec);
      if (ev.report.mrr > progress.best_valid_mrr) {
        progress.best_valid_mrr = ev.report.mrr;
        progress.best_epoch = epoch;
        progress.stale_evals = 0;
        is_best = true;
      } else if (++progress.stale_evals >= cfg.patience) {
        progress.finished = true;
      }
      if (cfg.target_valid_mrr && ev.report.mrr >= *cfg.target_valid_mrr) {
        result.reached_target = true;
        progress.finished = true;
      }
    }
    if (epoch == cfg.epochs) progress.finished = true;
    if (hooks.on_epoch_end) hooks.on_epoch_end(params, adam, progress, is_best);
  }
  result.best_valid_mrr = progress.best_valid_mrr;
  result.best_epoch = progress.best_epoch;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::uint64_t config_digest(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'K', 'G', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint8_t kDtypeF64 = 8;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void payload(const Tensor& t) {
    out_.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  void vocab(const Vocabulary& v) {
    pod<std::uint64_t>(v.size());
    for (const auto& tok : v.tokens()) str(tok);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor payload(std::size_t rows, std::size_t cols) {
    need(rows * cols * sizeof(double));
    Tensor t(rows, cols);
    std::memcpy(t.data(), in_.data() + pos_, rows * cols * sizeof(double));
    pos_ += rows * cols * sizeof(double);
    return t;
  }
  Vocabulary vocab() {
    const auto n = pod<std::uint64_t>();
    std::vector<std::string> toks;
    for (std::uint64_t i = 0; i < n; ++i) toks.push_back(str());
    return Vocabulary(std::move(toks));
  }
  void bytes(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  [[nodiscard]] bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw CheckpointError("checkpoint truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const ModelParams& params, const TrainConfig& train_config,
                           const AdamState& adam, const TrainProgress& progress,
                           const Vocabulary& entities, const Vocabulary& relations) {
  Checkpoint c;
  c.model_config = params.config();
  c.train_config = train_config;
  c.num_relations = params.num_relations();
  c.entities = entities;
  c.relations = relations;
  for (const Parameter* p : params.all()) c.tensors.emplace_back(p->name, p->value);
  c.adam = adam;
  c.progress = progress;
  return c;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  for (char ch : kMagic) w.pod(ch);
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string text = format_model_train(c.model_config, c.train_config);
  w.pod<std::uint64_t>(config_digest(text));
  w.str(text);
  w.vocab(c.entities);
  w.vocab(c.relations);
  w.pod<std::uint64_t>(c.num_relations);
  w.pod<std::uint64_t>(c.tensors.size());
  for (const auto& [name, t] : c.tensors) {
    w.str(name);
    w.pod<std::uint8_t>(kDtypeF64);
    w.pod<std::uint64_t>(t.rows());
    w.pod<std::uint64_t>(t.cols());
    w.payload(t);
  }
  w.pod<std::uint64_t>(c.adam.step);
  w.pod<std::uint64_t>(c.adam.first_moment.size());
  for (std::size_t i = 0; i < c.adam.first_moment.size(); ++i) {
    w.payload(c.adam.first_moment[i]);
    w.payload(c.adam.second_moment[i]);
  }
  const TrainProgress& p = c.progress;
  w.pod<std::uint64_t>(p.epochs_done);
  w.pod<double>(p.best_valid_mrr);
  w.pod<std::uint64_t>(p.best_epoch);
  w.pod<std::uint64_t>(p.stale_evals);
  w.pod<std::uint8_t>(p.finished ? 1 : 0);
  w.str(rng_state(p.shuffle_rng));
  w.str(rng_state(p.negative_rng));
  w.str(rng_state(p.noise_rng));
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw CheckpointError("not a kgf checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto digest = r.pod<std::uint64_t>();
  const std::string text = r.str();
  if (config_digest(text) != digest) throw CheckpointError("checkpoint config digest mismatch");
  Checkpoint c;
  const RunConfig rc = parse_config_text(text);
  c.model_config = rc.model;
  c.train_config = rc.train;
  c.entities = r.vocab();
  c.relations = r.vocab();
  c.num_relations = r.pod<std::uint64_t>();
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    if (r.pod<std::uint8_t>() != kDtypeF64) throw CheckpointError("tensor " + name + ": unsupported dtype");
    const auto rows = r.pod<std::uint64_t>();
    const auto cols = r.pod<std::uint64_t>();
    c.tensors.emplace_back(std::move(name), r.payload(rows, cols));
  }
  c.adam.step = r.pod<std::uint64_t>();
  const auto moments = r.pod<std::uint64_t>();
  if (moments != 0 && moments != c.tensors.size()) throw CheckpointError("optimizer state size mismatch");
  for (std::uint64_t i = 0; i < moments; ++i) {
    const Tensor& t = c.tensors[i].second;
    c.adam.first_moment.push_back(r.payload(t.rows(), t.cols()));
    c.adam.second_moment.push_back(r.payload(t.rows(), t.cols()));
  }
  TrainProgress& p = c.progress;
  p.epochs_done = r.pod<std::uint64_t>();
  p.best_valid_mrr = r.pod<double>();
  p.best_epoch = r.pod<std::uint64_t>();
  p.stale_evals = r.pod<std::uint64_t>();
  p.finished = r.pod<std::uint8_t>() != 0;
  set_rng_state(p.shuffle_rng, r.str());
  set_rng_state(p.negative_rng, r.str());
  set_rng_state(p.noise_rng, r.str());
  if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

ModelParams restore_params(const Checkpoint& ckpt) {
  Rng dummy(0);
  ModelParams params(ckpt.model_config, ckpt.num_relations, dummy);
  auto all = params.all();
  if (all.size() != ckpt.tensors.size()) throw CheckpointError("checkpoint tensor count does not match model");
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    if (all[i]->name != name || all[i]->value.shape() != t.shape()) {
      throw CheckpointError("checkpoint tensor " + name + " does not match model parameter " + all[i]->name);
    }
    all[i]->value = t;
  }
  return params;
}

}  // namespace kgf
