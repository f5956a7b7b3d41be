#include <doctest.h>

#include <algorithm>
#include <set>

#include "kgf/errors.hpp"
#include "kgf/kg.hpp"
#include "support.hpp"

using namespace kgf;
namespace kt = kgf::testing;

TEST_CASE("triplet files: vocabularies in first-seen order, comments skipped") {
  auto dir = kt::temp_dir("kg_load");
  kt::write_file(dir / "a.txt", "# header\nalice\tknows\tbob\n\nbob\tknows\tcarol\r\ncarol\tlikes\talice\n");
  TripletFile f = load_triplets(dir / "a.txt");
  REQUIRE(f.triplets.size() == 3);
  CHECK(f.entities.size() == 3);
  CHECK(f.relations.size() == 2);
  CHECK(f.entities.token(2) == "carol");
  CHECK(f.triplets[2] == Triplet{2, 1, 0});

  // A fixed vocabulary rejects unseen tokens and names the line.
  kt::write_file(dir / "b.txt", "alice\tknows\tbob\ndave\tknows\tbob\n");
  try {
    load_triplets(dir / "b.txt", &f.entities, &f.relations);
    FAIL("expected VocabularyError");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find("b.txt:2") != std::string::npos);
  }
}

TEST_CASE("malformed lines and missing files") {
  auto dir = kt::temp_dir("kg_bad");
  kt::write_file(dir / "bad.txt", "a\tr\tb\na r b\n");
  try {
    load_triplets(dir / "bad.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad.txt:2") != std::string::npos);
  }
  kt::write_file(dir / "four.txt", "a\tr\tb\tc\n");
  CHECK_THROWS_AS(load_triplets(dir / "four.txt"), ParseError);
  CHECK_THROWS_AS(load_triplets(dir / "nope.txt"), ParseError);
  CHECK_THROWS_AS(load_dataset(dir, SplitMode::kTransductive), ParseError);
}

TEST_CASE("vocabulary save/load round trip and duplicate rejection") {
  auto dir = kt::temp_dir("kg_vocab");
  Vocabulary v;
  v.add("x");
  v.add("y z");
  v.add("x");
  v.save(dir / "v.txt");
  CHECK(Vocabulary::load(dir / "v.txt") == v);
  CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"a", "a"}), VocabularyError);
  CHECK_THROWS_AS(v.at("w"), VocabularyError);
}

TEST_CASE("graph build: inverse augmentation and CSR incoming index") {
  const auto triplets = kt::toy_triplets();
  const auto g = KnowledgeGraph::build(triplets, 6, 3, true);
  CHECK(g.num_relations() == 6);
  CHECK(g.num_edges() == 2 * triplets.size());

  // Oracle: brute-force incoming lists from the augmented edge list.
  for (EntityId u = 0; u < 6; ++u) {
    std::vector<IncomingEdge> expect;
    for (const auto& t : triplets) {
      if (t.tail == u) expect.push_back({t.head, t.relation});
      if (t.head == u) expect.push_back({t.tail, t.relation + 3});
    }
    std::sort(expect.begin(), expect.end(), [](const IncomingEdge& a, const IncomingEdge& b) {
      return std::pair(a.relation, a.source) < std::pair(b.relation, b.source);
    });
    const auto got = g.incoming(u);
    CHECK(std::vector<IncomingEdge>(got.begin(), got.end()) == expect);
  }
  // Edge arrays grouped by target.
  const auto& a = *g.edge_arrays();
  CHECK(std::is_sorted(a.dst.begin(), a.dst.end()));
  CHECK(g.inverse_of(1) == 4);
  CHECK(g.inverse_of(4) == 1);

  CHECK_THROWS_AS(KnowledgeGraph::build(std::vector<Triplet>{{0, 3, 1}}, 6, 3, true), GraphError);
  CHECK_THROWS_AS(KnowledgeGraph::build(std::vector<Triplet>{{0, 0, 6}}, 6, 3, true), GraphError);
  CHECK_THROWS_AS(g.incoming(6), GraphError);
}

TEST_CASE("edge_arrays_without hides the fact in both directions, duplicates included") {
  std::vector<Triplet> t = {{0, 0, 1}, {0, 0, 1}, {1, 1, 2}, {1, 0, 0}};
  const auto g = KnowledgeGraph::build(t, 3, 2, true);
  const auto a = g.edge_arrays_without({0, 0, 1});
  CHECK(a->size() == g.num_edges() - 4);
  for (std::size_t k = 0; k < a->size(); ++k) {
    const Triplet e{a->src[k], a->rel[k], a->dst[k]};
    CHECK(e != Triplet{0, 0, 1});
    CHECK(e != Triplet{1, 2, 0});
  }
  // Passing the inverse query removes the same edges.
  const auto b = g.edge_arrays_without({1, 2, 0});
  CHECK(b->src == a->src);
  CHECK(b->rel == a->rel);
}

TEST_CASE("filter sets and queries") {
  const std::vector<Triplet> train = {{0, 0, 1}, {0, 0, 2}, {3, 1, 1}};
  const std::vector<Triplet> valid = {{0, 0, 3}};
  const std::vector<const std::vector<Triplet>*> splits{&train, &valid};
  const FilterSets f = build_filter_sets(splits, 2, true);
  const auto tails = f.tails(0, 0);
  CHECK(std::vector<EntityId>(tails.begin(), tails.end()) == std::vector<EntityId>{1, 2, 3});
  const auto inv = f.tails(1, 2);
  CHECK(std::vector<EntityId>(inv.begin(), inv.end()) == std::vector<EntityId>{0});
  CHECK(f.tails(2, 1).empty());
  CHECK(f.total_size() == 8);  // 3 + 1 forward, 4 inverse singletons

  const auto q = make_queries(valid, 2, f, true);
  REQUIRE(q.size() == 2);
  CHECK(q[0].gold_tail == 3);
  CHECK(q[1].head == 3);
  CHECK(q[1].relation == 2);
  CHECK(q[1].gold_tail == 0);
  CHECK(make_queries(valid, 2, f, false).size() == 1);
}

TEST_CASE("dataset loading: transductive shares one vocabulary, inductive splits entity spaces") {
  auto dir = kt::temp_dir("kg_ds");
  kt::write_file(dir / "train.txt", "a\tr\tb\nb\ts\tc\n");
  kt::write_file(dir / "valid.txt", "a\ts\tc\n");
  kt::write_file(dir / "test.txt", "c\tr\td\n");
  const auto tr = load_dataset(dir, SplitMode::kTransductive);
  CHECK(tr.num_entities() == 4);
  CHECK(tr.test[0] == Triplet{2, 0, 3});

  CHECK_THROWS_AS(load_dataset(dir, SplitMode::kInductive), ParseError);
  kt::write_file(dir / "inference.txt", "x\tr\ty\ny\ts\tz\n");
  kt::write_file(dir / "test.txt", "x\ts\tz\n");
  const auto ind = load_dataset(dir, SplitMode::kInductive);
  REQUIRE(ind.inference_entities.has_value());
  CHECK(ind.inference_entities->size() == 3);
  CHECK(ind.num_entities() == 3);
  CHECK(ind.test[0] == Triplet{0, 1, 2});

  kt::write_file(dir / "test.txt", "x\tq\tz\n");
  CHECK_THROWS_AS(load_dataset(dir, SplitMode::kInductive), VocabularyError);
}
