#include "kgf/wl.hpp"

#include <algorithm>
#include <map>

#include "kgf/errors.hpp"

namespace kgf {

namespace {

// Signature of one node: its old color followed by the sorted multiset of
// neighbor labels, flattened.
using Signature = std::vector<std::int64_t>;

// Replaces every signature by its rank among the distinct signatures.
std::vector<std::int32_t> canonical_ids(const std::vector<Signature>& sigs) {
  std::vector<const Signature*> distinct;
  distinct.reserve(sigs.size());
  for (const auto& s : sigs) distinct.push_back(&s);
  std::sort(distinct.begin(), distinct.end(), [](const Signature* a, const Signature* b) { return *a < *b; });
  distinct.erase(std::unique(distinct.begin(), distinct.end(),
                             [](const Signature* a, const Signature* b) { return *a == *b; }),
                 distinct.end());
  std::vector<std::int32_t> out(sigs.size());
  for (std::size_t u = 0; u < sigs.size(); ++u) {
    auto it = std::lower_bound(distinct.begin(), distinct.end(), &sigs[u],
                               [](const Signature* a, const Signature* b) { return *a < *b; });
    out[u] = static_cast<std::int32_t>(it - distinct.begin());
  }
  return out;
}

std::size_t count_colors(const std::vector<std::int32_t>& c) {
  std::int32_t m = -1;
  for (auto v : c) m = std::max(m, v);
  return static_cast<std::size_t>(m + 1);
}

template <typename Step>
Coloring refine(std::vector<std::int32_t> initial, std::size_t rounds, Step step) {
  Coloring out;
  // Re-index the initial colors canonically as well.
  std::vector<Signature> init(initial.size());
  for (std::size_t u = 0; u < initial.size(); ++u) init[u] = {initial[u]};
  out.colors = canonical_ids(init);
  std::size_t classes = count_colors(out.colors);
  for (std::size_t t = 0; t < rounds; ++t) {
    std::vector<std::int32_t> next = canonical_ids(step(out.colors));
    ++out.iterations;
    const std::size_t next_classes = count_colors(next);
    out.colors = std::move(next);
    // Signatures start with the old color, so classes can only split; an
    // unchanged count means an unchanged partition.
    if (next_classes == classes) {
      out.stable = true;
      break;
    }
    classes = next_classes;
  }
  if (!out.stable && out.colors.size() <= 1) out.stable = true;
  return out;
}

}  // namespace

std::size_t Coloring::num_colors() const { return count_colors(colors); }

SimpleGraph SimpleGraph::from_edges(std::size_t n, std::span<const std::pair<std::int32_t, std::int32_t>> edges) {
  SimpleGraph g;
  g.adjacency.resize(n);
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n) {
      throw GraphError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range");
    }
    if (a == b) continue;
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  for (auto& nb : g.adjacency) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

SimpleGraph SimpleGraph::from_knowledge_graph(const KnowledgeGraph& graph) {
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  for (const Triplet& t : graph.edges()) edges.emplace_back(t.head, t.tail);
  return from_edges(graph.num_entities(), edges);
}

Coloring wl_refine(const SimpleGraph& graph, std::size_t rounds) {
  const std::size_t n = graph.num_nodes();
  return refine(std::vector<std::int32_t>(n, 0), rounds, [&](const std::vector<std::int32_t>& c) {
    std::vector<Signature> sigs(n);
    for (std::size_t u = 0; u < n; ++u) {
      Signature& s = sigs[u];
      s.push_back(c[u]);
      for (auto v : graph.adjacency[u]) s.push_back(c[v]);
      std::sort(s.begin() + 1, s.end());
    }
    return sigs;
  });
}

PairColoring rawl2_refine_from(const KnowledgeGraph& graph, std::span<const EntityId> heads, std::size_t rounds) {
  const std::size_t n = graph.num_entities();
  std::vector<std::int32_t> init(n, 0);
  for (EntityId h : heads) {
    if (h < 0 || static_cast<std::size_t>(h) >= n) {
      throw GraphError("head entity " + std::to_string(h) + " out of range for " + std::to_string(n) + " entities");
    }
    init[h] = 1;
  }
  const auto nr = static_cast<std::int64_t>(graph.num_relations());
  return refine(std::move(init), rounds, [&](const std::vector<std::int32_t>& c) {
    std::vector<Signature> sigs(n);
    for (std::size_t u = 0; u < n; ++u) {
      Signature& s = sigs[u];
      s.push_back(c[u]);
      for (const IncomingEdge& e : graph.incoming(static_cast<EntityId>(u))) {
        s.push_back(static_cast<std::int64_t>(c[e.source]) * nr + e.relation);
      }
      std::sort(s.begin() + 1, s.end());
    }
    return sigs;
  });
}

PairColoring rawl2_refine(const KnowledgeGraph& graph, EntityId h, std::size_t rounds) {
  const EntityId heads[] = {h};
  return rawl2_refine_from(graph, heads, rounds);
}

KnowledgeGraph disjoint_union(const KnowledgeGraph& a, const KnowledgeGraph& b) {
  std::vector<Triplet> edges = a.edges();
  const auto shift = static_cast<EntityId>(a.num_entities());
  for (const Triplet& t : b.edges()) edges.push_back({t.head + shift, t.relation, t.tail + shift});
  const std::size_t nr = std::max(a.num_relations(), b.num_relations());
  return KnowledgeGraph::build(edges, a.num_entities() + b.num_entities(), nr, false);
}

namespace {

bool same_class_sizes(const Coloring& c, std::size_t split) {
  std::map<std::int32_t, std::int64_t> balance;
  for (std::size_t u = 0; u < c.colors.size(); ++u) balance[c.colors[u]] += u < split ? 1 : -1;
  return std::all_of(balance.begin(), balance.end(), [](const auto& kv) { return kv.second == 0; });
}

}  // namespace

bool wl_indistinguishable(const SimpleGraph& a, const SimpleGraph& b) {
  SimpleGraph u;
  u.adjacency = a.adjacency;
  const auto shift = static_cast<std::int32_t>(a.num_nodes());
  for (const auto& nb : b.adjacency) {
    auto& row = u.adjacency.emplace_back();
    for (auto v : nb) row.push_back(v + shift);
  }
  return same_class_sizes(wl_refine(u, u.num_nodes()), a.num_nodes());
}

bool rawl2_indistinguishable(const KnowledgeGraph& a, EntityId head_a, const KnowledgeGraph& b, EntityId head_b) {
  const KnowledgeGraph u = disjoint_union(a, b);
  const EntityId heads[] = {head_a, head_b + static_cast<EntityId>(a.num_entities())};
  return same_class_sizes(rawl2_refine_from(u, heads, u.num_entities()), a.num_entities());
}

ProbeReport expressivity_probe(const KnowledgeGraph& graph, EntityId h, RelationId query_relation,
                               const ModelParams& params, double tolerance) {
  if (params.config().noise != NoiseMode::kDisabled) {
    throw ContractError("expressivity_probe needs noise = disabled");
  }
  if (params.num_relations() != graph.num_relations()) {
    throw ContractError("expressivity_probe: model has " + std::to_string(params.num_relations()) +
                        " relations, graph has " + std::to_string(graph.num_relations()));
  }
  const std::size_t n = graph.num_entities();
  ProbeReport rep;
  rep.coloring = rawl2_refine(graph, h, n);

  Tape tape(false);
  ForwardInputs in;
  in.edges = graph.edge_arrays();
  in.num_entities = n;
  in.head = h;
  in.relation = query_relation;
  const ForwardState st = forward(tape, params, in);
  const Tensor& s = st.scores.value();
  rep.scores.assign(s.values().begin(), s.values().end());
  rep.value_repr = st.value_repr.back().value();

  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double gap = std::abs(rep.scores[u] - rep.scores[v]);
      if (rep.coloring.colors[u] == rep.coloring.colors[v]) {
        rep.max_class_score_gap = std::max(rep.max_class_score_gap, gap);
      } else {
        ++rep.distinguished_pairs;
        if (gap <= tolerance) ++rep.distinguished_equal_scores;
      }
    }
  }
  rep.sound = rep.max_class_score_gap <= tolerance;
  return rep;
}

}  // namespace kgf
