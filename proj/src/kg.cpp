#include "kgf/kg.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "kgf/errors.hpp"

namespace kgf {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  for (auto& t : tokens) {
    if (index_.contains(t)) throw VocabularyError("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

std::int32_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<std::int32_t>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<std::int32_t> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Vocabulary::at(const std::string& token) const {
  if (auto id = find(token)) return *id;
  throw VocabularyError("unknown token '" + token + "'");
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------
// Loading

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::int32_t lookup(Vocabulary& vocab, bool grow, const std::string& token,
                    const std::filesystem::path& path, std::size_t line_no) {
  if (grow) return vocab.add(token);
  if (auto id = vocab.find(token)) return *id;
  throw VocabularyError(path.string() + ":" + std::to_string(line_no) + ": unknown token '" +
                        token + "'");
}

}  // namespace

std::vector<Triplet> read_triplets(const std::filesystem::path& path, Vocabulary& entities,
                                   bool grow_entities, Vocabulary& relations, bool grow_relations) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open triplet file " + path.string());
  std::vector<Triplet> out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line) || line.front() == '#') continue;
    fields.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    Triplet t;
    t.head = lookup(entities, grow_entities, fields[0], path, line_no);
    t.relation = lookup(relations, grow_relations, fields[1], path, line_no);
    t.tail = lookup(entities, grow_entities, fields[2], path, line_no);
    out.push_back(t);
  }
  return out;
}

TripletFile load_triplets(const std::filesystem::path& path, const Vocabulary* entity_vocab,
                          const Vocabulary* relation_vocab) {
  TripletFile f;
  if (entity_vocab) f.entities = *entity_vocab;
  if (relation_vocab) f.relations = *relation_vocab;
  f.triplets = read_triplets(path, f.entities, entity_vocab == nullptr, f.relations,
                             relation_vocab == nullptr);
  return f;
}

DatasetSplit load_dataset(const std::filesystem::path& dir, SplitMode mode) {
  for (const char* name : {"train.txt", "valid.txt", "test.txt"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw ParseError("dataset file missing: " + (dir / name).string());
    }
  }
  DatasetSplit ds;
  ds.mode = mode;
  ds.train = read_triplets(dir / "train.txt", ds.entities, true, ds.relations, true);
  if (mode == SplitMode::kTransductive) {
    ds.valid = read_triplets(dir / "valid.txt", ds.entities, true, ds.relations, true);
    ds.test = read_triplets(dir / "test.txt", ds.entities, true, ds.relations, true);
    return ds;
  }
  if (!std::filesystem::exists(dir / "inference.txt")) {
    throw ParseError("inductive dataset needs " + (dir / "inference.txt").string());
  }
  // Validation queries live on the training graph; test queries on the
  // inference graph, which has its own entities but the training relations.
  ds.valid = read_triplets(dir / "valid.txt", ds.entities, true, ds.relations, false);
  Vocabulary inf_entities;
  ds.inference = read_triplets(dir / "inference.txt", inf_entities, true, ds.relations, false);
  ds.test = read_triplets(dir / "test.txt", inf_entities, true, ds.relations, false);
  ds.inference_entities = std::move(inf_entities);
  return ds;
}

// ---------------------------------------------------------------------------
// Graph

KnowledgeGraph KnowledgeGraph::build(std::span<const Triplet> triplets, std::size_t num_entities,
                                     std::size_t num_base_relations, bool add_inverse) {
  KnowledgeGraph g;
  g.num_entities_ = num_entities;
  g.num_base_relations_ = num_base_relations;
  g.num_relations_ = add_inverse ? 2 * num_base_relations : num_base_relations;
  g.has_inverse_ = add_inverse;

  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Triplet& t = triplets[i];
    if (t.head < 0 || static_cast<std::size_t>(t.head) >= num_entities || t.tail < 0 ||
        static_cast<std::size_t>(t.tail) >= num_entities) {
      throw GraphError("edge " + std::to_string(i) + ": entity id out of range [0, " +
                       std::to_string(num_entities) + ")");
    }
    if (t.relation < 0 || static_cast<std::size_t>(t.relation) >= num_base_relations) {
      throw GraphError("edge " + std::to_string(i) + ": relation id " + std::to_string(t.relation) +
                       " out of range [0, " + std::to_string(num_base_relations) + ")");
    }
  }

  g.edges_.assign(triplets.begin(), triplets.end());
  if (add_inverse) {
    const auto nb = static_cast<RelationId>(num_base_relations);
    for (const Triplet& t : triplets) g.edges_.push_back({t.tail, t.relation + nb, t.head});
  }

  // CSR over targets, each bucket sorted by (relation, source).
  std::vector<std::size_t> order(g.edges_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Triplet& x = g.edges_[a];
    const Triplet& y = g.edges_[b];
    if (x.tail != y.tail) return x.tail < y.tail;
    if (x.relation != y.relation) return x.relation < y.relation;
    return x.head < y.head;
  });
  g.offsets_.assign(num_entities + 1, 0);
  g.incoming_.reserve(order.size());
  auto arrays = std::make_shared<EdgeArrays>();
  arrays->src.reserve(order.size());
  arrays->rel.reserve(order.size());
  arrays->dst.reserve(order.size());
  for (std::size_t idx : order) {
    const Triplet& t = g.edges_[idx];
    g.incoming_.push_back({t.head, t.relation});
    ++g.offsets_[static_cast<std::size_t>(t.tail) + 1];
    arrays->src.push_back(t.head);
    arrays->rel.push_back(t.relation);
    arrays->dst.push_back(t.tail);
  }
  std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
  g.arrays_ = std::move(arrays);
  return g;
}

std::span<const IncomingEdge> KnowledgeGraph::incoming(EntityId u) const {
  const auto i = static_cast<std::size_t>(u);
  if (u < 0 || i >= num_entities_) throw GraphError("incoming: entity " + std::to_string(u) + " out of range");
  return {incoming_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

RelationId KnowledgeGraph::inverse_of(RelationId r) const {
  const auto nb = static_cast<RelationId>(num_base_relations_);
  if (!has_inverse_) throw GraphError("inverse_of: graph has no inverse relations");
  return r < nb ? r + nb : r - nb;
}

std::shared_ptr<const EdgeArrays> KnowledgeGraph::edge_arrays_without(const Triplet& fact) const {
  Triplet inv = fact;
  bool drop_inverse = false;
  if (has_inverse_) {
    inv = {fact.tail, inverse_of(fact.relation), fact.head};
    drop_inverse = true;
  }
  auto out = std::make_shared<EdgeArrays>();
  const EdgeArrays& a = *arrays_;
  out->src.reserve(a.size());
  out->rel.reserve(a.size());
  out->dst.reserve(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Triplet e{a.src[k], a.rel[k], a.dst[k]};
    if (e == fact || (drop_inverse && e == inv)) continue;
    out->src.push_back(e.head);
    out->rel.push_back(e.relation);
    out->dst.push_back(e.tail);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filters

void FilterSets::add(EntityId head, RelationId relation, EntityId tail) {
  sets_[key(head, relation)].push_back(tail);
}

void FilterSets::finalize() {
  for (auto& [k, v] : sets_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

std::span<const EntityId> FilterSets::tails(EntityId head, RelationId relation) const {
  auto it = sets_.find(key(head, relation));
  if (it == sets_.end()) return {};
  return it->second;
}

std::size_t FilterSets::total_size() const {
  std::size_t n = 0;
  for (const auto& [k, v] : sets_) n += v.size();
  return n;
}

FilterSets build_filter_sets(std::span<const std::vector<Triplet>* const> splits,
                             std::size_t num_base_relations, bool include_inverse) {
  FilterSets f;
  const auto nb = static_cast<RelationId>(num_base_relations);
  for (const auto* split : splits) {
    for (const Triplet& t : *split) {
      f.add(t.head, t.relation, t.tail);
      if (include_inverse) f.add(t.tail, t.relation + nb, t.head);
    }
  }
  f.finalize();
  return f;
}

std::vector<Query> make_queries(std::span<const Triplet> facts, std::size_t num_base_relations,
                                const FilterSets& filters, bool both_directions) {
  const auto nb = static_cast<RelationId>(num_base_relations);
  std::vector<Query> out;
  out.reserve(facts.size() * (both_directions ? 2 : 1));
  for (const Triplet& t : facts) {
    out.push_back({t.head, t.relation, t.tail, filters.tails(t.head, t.relation)});
    if (both_directions) {
      out.push_back({t.tail, t.relation + nb, t.head, filters.tails(t.tail, t.relation + nb)});
    }
  }
  return out;
}

}  // namespace kgf
