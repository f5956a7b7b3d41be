#include "kgf/eval.hpp"

#include <algorithm>
#include <thread>

#include "kgf/errors.hpp"

namespace kgf {

double rank_answer(std::span<const double> scores, EntityId gold, std::span<const std::uint8_t> mask) {
  const auto g = static_cast<std::size_t>(gold);
  if (gold < 0 || g >= scores.size()) throw ContractError("rank_answer: gold entity out of range");
  if (!mask.empty() && mask.size() != scores.size()) {
    throw ContractError("rank_answer: mask size does not match score vector");
  }
  if (!mask.empty() && mask[g] != 0) throw ContractError("rank_answer: gold entity is masked out");
  const double target = scores[g];
  std::size_t greater = 0, equal = 0;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    if (v == g || (!mask.empty() && mask[v] != 0)) continue;
    if (scores[v] > target) {
      ++greater;
    } else if (scores[v] == target) {
      ++equal;
    }
  }
  return 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(equal);
}

double query_rank(std::span<const double> scores, const Query& query, bool filtered) {
  if (!filtered) return rank_answer(scores, query.gold_tail, {});
  std::vector<std::uint8_t> mask(scores.size(), 0);
  for (EntityId t : query.filter) {
    if (t != query.gold_tail) mask[static_cast<std::size_t>(t)] = 1;
  }
  return rank_answer(scores, query.gold_tail, mask);
}

MetricsReport compute_metrics(std::span<const double> ranks) {
  if (ranks.empty()) throw MetricError("compute_metrics: no ranks");
  MetricsReport m;
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  m.count = ranks.size();
  return m;
}

EvalResult evaluate(const KnowledgeGraph& graph, std::span<const Query> queries,
                    const ModelParams& params, const EvalOptions& options) {
  Rng noise_rng = make_stream(options.noise_seed, "eval-noise");
  const std::vector<Tensor> noise = draw_noise(params.config(), graph.num_entities(), noise_rng);

  EvalResult res;
  res.records.resize(queries.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Query& q = queries[i];
      ForwardInputs in;
      in.edges = graph.edge_arrays();
      in.num_entities = graph.num_entities();
      in.head = q.head;
      in.relation = q.relation;
      in.noise = noise;
      const std::vector<double> scores = score_all(params, in);
      res.records[i] = {q.head, q.relation, q.gold_tail, query_rank(scores, q, options.filtered)};
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, queries.size()));
  if (threads <= 1) {
    work(0, queries.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (queries.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(queries.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  std::vector<double> ranks;
  ranks.reserve(res.records.size());
  for (const auto& r : res.records) ranks.push_back(r.rank);
  if (!ranks.empty()) res.report = compute_metrics(ranks);
  res.report.both_directions = options.both_directions;
  return res;
}

std::unique_ptr<EvalSplit> prepare_eval_split(const DatasetSplit& ds, const std::string& split,
                                              bool both_directions) {
  const std::vector<Triplet>* facts = nullptr;
  if (split == "train") {
    facts = &ds.train;
  } else if (split == "valid") {
    facts = &ds.valid;
  } else if (split == "test") {
    facts = &ds.test;
  } else {
    throw ConfigError("unknown split '" + split + "' (train | valid | test)");
  }
  const std::size_t nb = ds.num_base_relations();
  auto out = std::make_unique<EvalSplit>();
  out->facts = *facts;
  std::vector<const std::vector<Triplet>*> filter_splits;
  if (ds.mode == SplitMode::kInductive && split == "test") {
    out->graph = KnowledgeGraph::build(*ds.inference, ds.inference_entities->size(), nb, true);
    filter_splits = {&*ds.inference, &ds.test};
  } else {
    out->graph = KnowledgeGraph::build(ds.train, ds.num_entities(), nb, true);
    filter_splits = {&ds.train, &ds.valid};
    if (ds.mode == SplitMode::kTransductive) filter_splits.push_back(&ds.test);
  }
  out->filters = build_filter_sets(filter_splits, nb, true);
  out->queries = make_queries(out->facts, nb, out->filters, both_directions);
  return out;
}

}  // namespace kgf
