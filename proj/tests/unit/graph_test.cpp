// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "conde/graph.hpp"
#include "conde/io.hpp"
#include "support.hpp"

using namespace conde;
using conde::testing::TempDir;
using conde::testing::toy_graph;

namespace {

TripartiteGraph random_graph(Rng& rng, std::size_t users, std::size_t items, std::size_t concepts) {
  std::vector<Interaction> clicks;
  std::vector<ItemConceptRecord> tags;
  for (std::size_t u = 0; u < users; ++u) {
    const auto deg = 1 + uniform_index(rng, items);
    for (auto m : sample_without_replacement(rng, static_cast<std::uint32_t>(items), static_cast<std::uint32_t>(deg))) {
      clicks.push_back({"u" + std::to_string(u), "i" + std::to_string(m), {}});
    }
  }
  for (std::size_t m = 0; m < items; ++m) {
    const auto deg = uniform_index(rng, concepts + 1);
    for (auto c : sample_without_replacement(rng, static_cast<std::uint32_t>(concepts), static_cast<std::uint32_t>(deg))) {
      tags.push_back({"i" + std::to_string(m), "c" + std::to_string(c), 1.0 + c});
    }
  }
  return build_graph(clicks, tags);
}

}  // namespace

TEST_CASE("build examples") {
  SUBCASE("one click, one tag") {
    std::vector<Interaction> clicks{{"u", "i", {}}};
    std::vector<ItemConceptRecord> tags{{"i", "c", 1.0}};
    const auto g = build_graph(clicks, tags);
    CHECK(g.num_users() + g.num_items() + g.num_concepts() == 3);
    CHECK(g.num_user_item_edges() + g.num_item_concept_edges() == 2);
  }
  SUBCASE("duplicate click collapses") {
    std::vector<Interaction> clicks{{"u", "i", {}}, {"u", "i", 5.0}};
    BuildReport rep;
    const auto g = build_graph(clicks, {}, &rep);
    CHECK(g.num_user_item_edges() == 1);
    CHECK(rep.duplicate_clicks == 1);
  }
  SUBCASE("two users share an item with two concepts") {
    std::vector<Interaction> clicks{{"u1", "m", {}}, {"u2", "m", {}}};
    std::vector<ItemConceptRecord> tags{{"m", "x", 1.0}, {"m", "y", 1.0}};
    const auto g = build_graph(clicks, tags);
    const auto m = *g.find(NodeKind::kItem, "m");
    const std::vector<std::uint32_t> users(g.item_users()[m].begin(), g.item_users()[m].end());
    CHECK(users == std::vector<std::uint32_t>{*g.find(NodeKind::kUser, "u1"), *g.find(NodeKind::kUser, "u2")});
    CHECK(g.item_concepts().degree(m) == 2);
  }
  SUBCASE("tag on an unclicked item is dropped and counted") {
    std::vector<Interaction> clicks{{"u", "i", {}}};
    std::vector<ItemConceptRecord> tags{{"ghost", "c", 1.0}, {"i", "c", 1.0}};
    BuildReport rep;
    const auto g = build_graph(clicks, tags, &rep);
    CHECK(rep.dropped_concept_records == 1);
    CHECK(g.num_items() == 1);
  }
  SUBCASE("no interactions") { CHECK_THROWS_WITH_AS(build_graph({}, {}), "no interactions", GraphError); }
}

TEST_CASE("tripartite validation rejects same-kind and user-concept edges") {
  GraphBuilder b(2, 2, 2);
  CHECK_THROWS_AS(b.add_edge({NodeKind::kUser, 0}, {NodeKind::kUser, 1}), GraphError);
  CHECK_THROWS_AS(b.add_edge({NodeKind::kItem, 0}, {NodeKind::kItem, 1}), GraphError);
  CHECK_THROWS_AS(b.add_edge({NodeKind::kConcept, 0}, {NodeKind::kConcept, 1}), GraphError);
  CHECK_THROWS_AS(b.add_edge({NodeKind::kUser, 0}, {NodeKind::kConcept, 1}), GraphError);
  CHECK_THROWS_AS(b.add_edge({NodeKind::kConcept, 0}, {NodeKind::kUser, 1}), GraphError);
  CHECK_THROWS_AS(b.add_edge({NodeKind::kUser, 5}, {NodeKind::kItem, 0}), GraphError);
  CHECK(b.add_edge({NodeKind::kItem, 1}, {NodeKind::kUser, 0}));
  CHECK_FALSE(b.add_edge({NodeKind::kUser, 0}, {NodeKind::kItem, 1}));
}

TEST_CASE("random graphs: conservation, consistency and no duplicates") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_graph(rng, 1 + uniform_index(rng, 8), 1 + uniform_index(rng, 8), 1 + uniform_index(rng, 5));
    CHECK_NOTHROW(g.validate());
    std::size_t by_user = 0, by_item = 0;
    for (std::size_t u = 0; u < g.num_users(); ++u) by_user += g.user_items().degree(u);
    for (std::size_t m = 0; m < g.num_items(); ++m) by_item += g.item_users().degree(m);
    CHECK(by_user == by_item);
    for (std::uint32_t u = 0; u < g.num_users(); ++u) {
      for (auto m : g.user_items()[u]) {
        auto back = g.item_users()[m];
        CHECK(std::find(back.begin(), back.end(), u) != back.end());
        CHECK(g.has_edge({NodeKind::kUser, u}, {NodeKind::kItem, m}));
      }
      std::set<std::uint32_t> uniq(g.user_items()[u].begin(), g.user_items()[u].end());
      CHECK(uniq.size() == g.user_items().degree(u));
    }
  }
}

TEST_CASE("sampling examples") {
  std::vector<Interaction> clicks;
  for (int i = 0; i < 100; ++i) clicks.push_back({"big", "i" + std::to_string(i), {}});
  for (int i = 0; i < 3; ++i) clicks.push_back({"small", "i" + std::to_string(i), {}});
  const auto g = build_graph(clicks, {});
  const auto big = *g.find(NodeKind::kUser, "big");
  const auto small = *g.find(NodeKind::kUser, "small");
  SamplingBudget budget;  // 40
  CHECK(sample_neighborhood(g, small, budget, 1).items.size() == 3);
  const auto a = sample_neighborhood(g, big, budget, 1);
  CHECK(a.items.size() == 40);
  CHECK(std::set<std::uint32_t>(a.items.begin(), a.items.end()).size() == 40);
  const auto b = sample_neighborhood(g, big, budget, 1);
  CHECK(a.items == b.items);
  CHECK(sample_neighborhood(g, big, budget, 2).items != a.items);
}

TEST_CASE("sampled edges exist, without duplicates; p = max degree returns everything") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_graph(rng, 6, 9, 5);
    const SamplingBudget small{2, 2, 2};
    for (std::uint32_t u = 0; u < g.num_users(); ++u) {
      const auto nb = sample_neighborhood(g, u, small, 77);
      std::set<std::uint32_t> items(nb.items.begin(), nb.items.end());
      CHECK(items.size() == nb.items.size());
      for (std::size_t j = 0; j < nb.items.size(); ++j) {
        const auto m = nb.items[j];
        CHECK(g.clicked(u, m));
        std::set<std::uint32_t> cs(nb.concepts[j].begin(), nb.concepts[j].end());
        CHECK(cs.size() == nb.concepts[j].size());
        for (auto c : cs) CHECK(g.has_edge({NodeKind::kItem, m}, {NodeKind::kConcept, c}));
        for (auto v : nb.users[j]) {
          CHECK(v != u);
          CHECK(g.clicked(v, m));
        }
      }
      const std::size_t p = std::max({g.user_items().max_degree(), g.item_concepts().max_degree(),
                                      g.item_users().max_degree(), std::size_t{1}});
      const auto all = sample_neighborhood(g, u, {p, p, p}, 3);
      const auto full = full_neighborhood(g, u, true);
      CHECK(all.items == full.items);
      CHECK(all.concepts == full.concepts);
      CHECK(all.users == full.users);
    }
    Rng r2(trial);
    const Adjacency& adj = g.item_concepts();
    const Adjacency same = adj.sample(std::max<std::size_t>(1, adj.max_degree()), r2);
    CHECK(same.targets == adj.targets);
  }
}

TEST_CASE("archive round trip and fixture") {
  TempDir dir("graph");
  GraphArchive a;
  a.graph = toy_graph();
  a.splits["test"] = {{{0, 3}}, {{0, 5}}};
  save_graph(a, dir / "g.json");
  const GraphArchive b = load_graph(dir / "g.json");
  CHECK(b.graph == a.graph);
  CHECK(b.splits == a.splits);
  for (std::uint32_t m = 0; m < a.graph.num_items(); ++m) {
    const auto wa = a.graph.item_concept_weights(m);
    const auto wb = b.graph.item_concept_weights(m);
    CHECK(std::equal(wa.begin(), wa.end(), wb.begin(), wb.end()));
  }

  atomic_write(dir / "two.json",
               R"({"users":["a","b"],"items":["x"],"concepts":["k"],"edges_ui":[[0,0],[1,0]],"edges_ic":[[0,0,0.5]]})");
  const auto fx = load_graph(dir / "two.json").graph;
  CHECK(fx.num_user_item_edges() == 2);
  CHECK(fx.item_users()[0].size() == 2);
  CHECK(fx.item_concepts()[0][0] == 0);
  CHECK(fx.item_concept_weights(0)[0] == 0.5);

  atomic_write(dir / "empty.json", R"({"users":[],"items":[],"concepts":[],"edges_ui":[],"edges_ic":[]})");
  CHECK_THROWS_AS(load_graph(dir / "empty.json"), GraphError);
  atomic_write(dir / "bad.json", "{\n  \"users\": [,\n}");
  try {
    load_graph(dir / "bad.json");
    FAIL("expected a parse error");
  } catch (const GraphError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("TSV readers") {
  TempDir dir("tsv");
  atomic_write(dir / "i.tsv", "u1\ti1\t3\nu2\ti1\n\nu1\ti2\t1.5\n");
  const auto rows = read_interactions_tsv(dir / "i.tsv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].timestamp == 3.0);
  CHECK_FALSE(rows[1].timestamp.has_value());
  atomic_write(dir / "c.tsv", "i1\tclassic hk movie\t2.5\n");
  const auto tags = read_item_concepts_tsv(dir / "c.tsv");
  REQUIRE(tags.size() == 1);
  CHECK(tags[0].concept_text == "classic hk movie");
  CHECK(tags[0].weight == 2.5);
  atomic_write(dir / "bad.tsv", "i1\tx\tnotanumber\n");
  CHECK_THROWS_AS(read_item_concepts_tsv(dir / "bad.tsv"), GraphError);
}
