#pragma once
// Color refinement on small graphs: classic 1-WL on the simple-graph view
// and the head-conditioned relational pair test (one fixed first argument h),
// plus a probe that compares the refinement against model outputs.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kgf/kg.hpp"
#include "kgf/model.hpp"

namespace kgf {

/// Undirected simple graph: no self loops, no parallel edges.
struct SimpleGraph {
  std::vector<std::vector<std::int32_t>> adjacency;  // sorted neighbor lists

  static SimpleGraph from_edges(std::size_t num_nodes, std::span<const std::pair<std::int32_t, std::int32_t>> edges);
  /// Relations and directions dropped.
  static SimpleGraph from_knowledge_graph(const KnowledgeGraph& graph);
  [[nodiscard]] std::size_t num_nodes() const { return adjacency.size(); }
};

struct Coloring {
  std::vector<std::int32_t> colors;  // dense ids 0..num_colors-1
  std::size_t iterations = 0;        // refinement rounds applied
  bool stable = false;               // last round did not split any class
  [[nodiscard]] std::size_t num_colors() const;
};

/// Colors for one fixed source h: colors[u] is the class of the pair (h, u).
using PairColoring = Coloring;

/// 1-WL. New colors are ranks of (old color, sorted neighbor colors) in
/// sorted order, so ids depend only on the graph, never on run order.
/// Stops early once a round leaves the partition unchanged.
Coloring wl_refine(const SimpleGraph& graph, std::size_t rounds);

/// Relational refinement conditioned on head h: c0(u) = [u == h];
/// c_{t+1}(u) = tau(c_t(u), {{(c_t(w), r) : r(w, u) in graph}}).
/// `rounds` caps the iterations; num_nodes rounds always suffice.
PairColoring rawl2_refine(const KnowledgeGraph& graph, EntityId h, std::size_t rounds);

/// Same refinement started from an explicit set of distinguished nodes.
/// Running it on a disjoint union compares (graph, head) pairs across graphs.
PairColoring rawl2_refine_from(const KnowledgeGraph& graph, std::span<const EntityId> heads,
                               std::size_t rounds);

/// Both tests on the disjoint union of two graphs: true when every color
/// class has the same size on both sides.
bool wl_indistinguishable(const SimpleGraph& a, const SimpleGraph& b);
bool rawl2_indistinguishable(const KnowledgeGraph& a, EntityId head_a, const KnowledgeGraph& b,
                             EntityId head_b);

/// Disjoint union; b's entities are shifted by a.num_entities().
KnowledgeGraph disjoint_union(const KnowledgeGraph& a, const KnowledgeGraph& b);

struct ProbeReport {
  PairColoring coloring;
  std::vector<double> scores;  // per entity
  Tensor value_repr;           // last layer's value representation, n x d
  double max_class_score_gap = 0.0;  // largest score spread inside one class
  std::size_t distinguished_pairs = 0;
  std::size_t distinguished_equal_scores = 0;  // warnings, not failures
  bool sound = true;           // max_class_score_gap <= tolerance
};

/// Runs the model with X = 0 and noise disabled and checks that entities
/// sharing a stable color get equal scores. Throws ContractError when the
/// model's noise mode is not kDisabled.
ProbeReport expressivity_probe(const KnowledgeGraph& graph, EntityId h, RelationId query_relation,
                               const ModelParams& params, double tolerance = 1e-9);

}  // namespace kgf
