#pragma once
// Filtered ranking and MRR / Hits@n.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <span>
#include <vector>

#include "kgf/kg.hpp"
#include "kgf/model.hpp"

namespace kgf {

/// rank = 1 + #{v unmasked, v != gold : s_v > s_gold}
///          + 0.5 * #{v unmasked, v != gold : s_v == s_gold}
/// mask[v] != 0 removes v from the competition. mask may be empty (raw
/// setting). A masked gold raises ContractError.
double rank_answer(std::span<const double> scores, EntityId gold, std::span<const std::uint8_t> mask);

/// Filtered rank of query.gold_tail: every other entity in query.filter is
/// masked. With filtered = false the raw rank is returned.
double query_rank(std::span<const double> scores, const Query& query, bool filtered = true);

struct MetricsReport {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
  bool both_directions = true;
};

/// Mean reciprocal rank and Hits@{1,3,10}. Throws MetricError when empty.
MetricsReport compute_metrics(std::span<const double> ranks);

struct QueryRecord {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId gold = 0;
  double rank = 0.0;
};

struct EvalOptions {
  std::uint64_t noise_seed = 0;
  bool filtered = true;
  std::size_t threads = 1;
  bool both_directions = true;  // recorded in the report only
};

struct EvalResult {
  MetricsReport report;
  std::vector<QueryRecord> records;  // in query order
};

/// Scores every query on the given fact graph and ranks its gold tail. The
/// noise matrices are drawn once from options.noise_seed and shared by all
/// queries, so results are reproducible.
EvalResult evaluate(const KnowledgeGraph& graph, std::span<const Query> queries,
                    const ModelParams& params, const EvalOptions& options);

/// Graph, filters and queries for one evaluation split. Queries point into
/// `filters`, so the object is handed out behind a pointer and never moved.
struct EvalSplit {
  KnowledgeGraph graph;
  FilterSets filters;
  std::vector<Triplet> facts;
  std::vector<Query> queries;
};

/// split is "train", "valid" or "test". Transductive splits use the training
/// graph and filter over train/valid/test. Inductive test queries use the
/// inference graph and filter over inference/test; inductive validation
/// filters over train/valid.
std::unique_ptr<EvalSplit> prepare_eval_split(const DatasetSplit& dataset, const std::string& split,
                                              bool both_directions = true);

}  // namespace kgf
