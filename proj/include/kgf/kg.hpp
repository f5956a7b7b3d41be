#pragma once
// Triplet datasets and the immutable indexed knowledge graph.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgf/autodiff.hpp"

namespace kgf {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triplet {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

/// Token <-> dense id, ids assigned in first-seen order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::int32_t add(const std::string& token);
  [[nodiscard]] std::optional<std::int32_t> find(const std::string& token) const;
  /// Throws VocabularyError for unknown tokens.
  [[nodiscard]] std::int32_t at(const std::string& token) const;
  [[nodiscard]] const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct TripletFile {
  std::vector<Triplet> triplets;
  Vocabulary entities;
  Vocabulary relations;
};

/// Reads `head<TAB>relation<TAB>tail` lines. Blank and '#'-prefixed lines are
/// skipped. A supplied vocabulary is used verbatim (unknown tokens raise
/// VocabularyError); a missing one is built in first-seen order.
TripletFile load_triplets(const std::filesystem::path& path, const Vocabulary* entity_vocab = nullptr,
                          const Vocabulary* relation_vocab = nullptr);

/// Lower-level reader: `grow_*` decides whether unseen tokens extend the
/// vocabulary or are rejected.
std::vector<Triplet> read_triplets(const std::filesystem::path& path, Vocabulary& entities,
                                   bool grow_entities, Vocabulary& relations, bool grow_relations);

/// Incoming-edge record for a target entity u: r(source, u) is a fact.
struct IncomingEdge {
  EntityId source = 0;
  RelationId relation = 0;

  friend bool operator==(const IncomingEdge&, const IncomingEdge&) = default;
  friend auto operator<=>(const IncomingEdge&, const IncomingEdge&) = default;
};

class KnowledgeGraph {
 public:
  /// Validates ids, optionally appends the inverse edge (t, r + num_base, h)
  /// for every input edge, and builds the CSR incoming index sorted by
  /// (relation, source) per target. Duplicates are kept.
  static KnowledgeGraph build(std::span<const Triplet> triplets, std::size_t num_entities,
                              std::size_t num_base_relations, bool add_inverse);

  [[nodiscard]] std::size_t num_entities() const { return num_entities_; }
  [[nodiscard]] std::size_t num_base_relations() const { return num_base_relations_; }
  [[nodiscard]] std::size_t num_relations() const { return num_relations_; }
  [[nodiscard]] bool has_inverse() const { return has_inverse_; }
  [[nodiscard]] std::size_t num_edges() const { return edges_.size(); }

  /// Edges in construction order: the inputs, then (if added) their inverses.
  [[nodiscard]] const std::vector<Triplet>& edges() const { return edges_; }
  [[nodiscard]] std::span<const IncomingEdge> incoming(EntityId u) const;

  /// Message-passing arrays in CSR order (grouped by target).
  [[nodiscard]] std::shared_ptr<const EdgeArrays> edge_arrays() const { return arrays_; }

  /// Edge arrays without every copy of (h, r, t) and of its inverse. Used to
  /// hide a training query's own fact from its forward pass.
  [[nodiscard]] std::shared_ptr<const EdgeArrays> edge_arrays_without(const Triplet& fact) const;

  /// Inverse relation id of r (either direction).
  [[nodiscard]] RelationId inverse_of(RelationId r) const;

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_base_relations_ = 0;
  std::size_t num_relations_ = 0;
  bool has_inverse_ = false;
  std::vector<Triplet> edges_;
  std::vector<std::size_t> offsets_;  // size num_entities + 1
  std::vector<IncomingEdge> incoming_;
  std::shared_ptr<const EdgeArrays> arrays_;
};

/// Known true tails per (head, relation), over augmented relation ids.
class FilterSets {
 public:
  void add(EntityId head, RelationId relation, EntityId tail);
  /// Sorted, deduplicated tails; empty span if the key is unknown.
  [[nodiscard]] std::span<const EntityId> tails(EntityId head, RelationId relation) const;
  [[nodiscard]] std::size_t num_keys() const { return sets_.size(); }
  /// Sum of set sizes over all keys.
  [[nodiscard]] std::size_t total_size() const;

  /// Must be called after the last add() and before tails().
  void finalize();

 private:
  static std::uint64_t key(EntityId h, RelationId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(h)) << 32) |
           static_cast<std::uint32_t>(r);
  }
  std::unordered_map<std::uint64_t, std::vector<EntityId>> sets_;
};

/// Union over all given splits of the true tails per (h, r). With
/// include_inverse the reversed facts are registered under r + num_base.
FilterSets build_filter_sets(std::span<const std::vector<Triplet>* const> splits,
                             std::size_t num_base_relations, bool include_inverse = true);

enum class SplitMode { kTransductive, kInductive };

struct DatasetSplit {
  SplitMode mode = SplitMode::kTransductive;
  std::vector<Triplet> train;
  std::vector<Triplet> valid;
  std::vector<Triplet> test;
  Vocabulary entities;
  Vocabulary relations;
  /// Inductive only: test-time fact graph (`inference.txt`) and the entity
  /// vocabulary shared by it and `test.txt`. Relation ids are shared.
  std::optional<std::vector<Triplet>> inference;
  std::optional<Vocabulary> inference_entities;

  [[nodiscard]] std::size_t num_entities() const { return entities.size(); }
  [[nodiscard]] std::size_t num_base_relations() const { return relations.size(); }
};

/// Reads train/valid/test (and inference.txt in inductive mode) from `dir`.
DatasetSplit load_dataset(const std::filesystem::path& dir, SplitMode mode);

/// One tail-ranking query. filter holds all known true tails of
/// (head, relation) including gold_tail.
struct Query {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId gold_tail = 0;
  std::span<const EntityId> filter;
};

/// Tail queries for the facts; with both_directions each fact also yields the
/// head query (t, r^-1, ?) with gold h.
std::vector<Query> make_queries(std::span<const Triplet> facts, std::size_t num_base_relations,
                                const FilterSets& filters, bool both_directions = true);

}  // namespace kgf
