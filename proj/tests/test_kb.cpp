/*
 * Copyright 2026 The kbopt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <algorithm>
#include <map>
#include <queue>
#include <random>
#include <set>

#include "support.hpp"

using namespace kbopt;
using kbopt::testing::TempDir;

namespace {

const char* kSchemaLine =
    R"({"kind":"schema","entity_types":["product","brand"],"relation_types":["has_brand","x"],)"
    R"("candidate_types":["product"],"description":"tiny"})";

KbSchema tiny_schema() { return {{"product", "brand"}, {"has_brand", "x"}, {"product"}, "tiny"}; }

Entity ent(std::uint64_t id, const std::string& type, const std::string& doc, int comp = 0) {
  return Entity{EntityId{id}, type, doc, comp, {}};
}

// Breadth-first labeling over an undirected adjacency list.
std::vector<int> bfs_labels(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      for (auto v : adj[u])
        if (label[v] < 0) {
          label[v] = next;
          q.push(v);
        }
    }
    ++next;
  }
  return label;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("load_kb: two entities and one edge share a component") {
  std::string text = std::string(kSchemaLine) + "\n" +
                     R"({"kind":"entity","id":0,"type":"product","document":"product A"})" "\n" +
                     R"({"kind":"entity","id":1,"type":"brand","document":"brand B"})" "\n" +
                     R"({"kind":"relation","src":0,"dst":1,"rel":"has_brand"})" "\n";
  TempDir dir("kb");
  write_text_file(dir / "kb.jsonl", text);
  auto kb = load_kb(dir / "kb.jsonl", KbKind::relation_text);
  CHECK(kb.entities().size() == 2);
  CHECK(kb.relations().size() == 1);
  CHECK(kb.entities()[0].component_id == 0);
  CHECK(kb.entities()[1].component_id == 0);
  CHECK(validate_components(kb).empty());
}

TEST_CASE("load_kb: dangling edge names the missing id") {
  std::string text = std::string(kSchemaLine) + "\n" +
                     R"({"kind":"entity","id":0,"type":"product","document":"p"})" "\n" +
                     R"({"kind":"relation","src":0,"dst":7,"rel":"x"})" "\n";
  try {
    parse_kb(text, KbKind::relation_text);
    FAIL("expected DanglingEdge");
  } catch (const DanglingEdge& e) {
    CHECK(e.missing() == EntityId{7});
  }
}

TEST_CASE("load_kb: malformed input is rejected") {
  CHECK_THROWS_AS(parse_kb("not json\n", KbKind::relation_text), ParseError);
  CHECK_THROWS_AS(parse_kb(R"({"kind":"entity","id":0,"type":"product","document":"p"})" "\n",
                           KbKind::relation_text),
                  ParseError);
  std::string dup = std::string(kSchemaLine) + "\n" +
                    R"({"kind":"entity","id":0,"type":"product","document":"p"})" "\n" +
                    R"({"kind":"entity","id":0,"type":"product","document":"q"})" "\n";
  CHECK_THROWS_AS(parse_kb(dup, KbKind::relation_text), DuplicateEntity);
  std::string bad_type = std::string(kSchemaLine) + "\n" +
                         R"({"kind":"entity","id":0,"type":"spaceship","document":"p"})" "\n";
  CHECK_THROWS_AS(parse_kb(bad_type, KbKind::relation_text), InvalidKb);
  CHECK_THROWS_AS(load_kb("/nonexistent/kb.jsonl", KbKind::relation_text), IoError);
}

TEST_CASE("save then load of a synthetic KB is structurally equal") {
  auto syn = generate_synthetic_kb(1);
  TempDir dir("kb");
  save_kb(syn.kb, dir / "kb.jsonl");
  save_queries(syn.split, dir / "queries.jsonl");
  CHECK(load_kb(dir / "kb.jsonl", KbKind::relation_text) == syn.kb);
  CHECK(load_queries(dir / "queries.jsonl") == syn.split);

  SynthParams img;
  img.kind = KbKind::image_text;
  auto images = generate_synthetic_kb(3, img);
  save_kb(images.kb, dir / "img.jsonl");
  CHECK(load_kb(dir / "img.jsonl", KbKind::image_text) == images.kb);
}

TEST_CASE("validate_components: correct and wrong labelings") {
  std::vector<Entity> ents = {ent(0, "product", "a", 0), ent(1, "product", "b", 0),
                              ent(2, "product", "c", 1), ent(3, "product", "d", 1)};
  std::vector<Relation> rels = {{EntityId{0}, EntityId{1}, "x"}, {EntityId{2}, EntityId{3}, "x"}};
  KnowledgeBase good(KbKind::relation_text, tiny_schema(), ents, rels, ComponentLabels::keep);
  CHECK(validate_components(good).empty());

  for (auto& e : ents) e.component_id = 0;
  KnowledgeBase bad(KbKind::relation_text, tiny_schema(), ents, rels, ComponentLabels::keep);
  auto v = validate_components(bad);
  REQUIRE(v.size() == 1);
  CHECK(v[0].entities == std::vector<EntityId>{EntityId{2}, EntityId{3}});
}

TEST_CASE("component labeling agrees with breadth-first search on random graphs") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 100;
    std::vector<Entity> ents;
    for (std::size_t i = 0; i < n; ++i) ents.push_back(ent(i * 3 + 1, "product", "e"));
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<Relation> rels;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::size_t m = rng() % 120;
    for (std::size_t k = 0; k < m; ++k) {
      std::size_t a = rng() % n, b = rng() % n;
      if (!seen.insert({a, b}).second) continue;
      edges.emplace_back(a, b);
      rels.push_back({ents[a].id, ents[b].id, "x"});
    }
    KnowledgeBase kb(KbKind::relation_text, tiny_schema(), ents, rels);
    std::vector<int> got;
    for (const auto& e : kb.entities()) got.push_back(e.component_id);
    CHECK(same_partition(got, bfs_labels(n, edges)));
    CHECK(validate_components(kb).empty());
  }
}

TEST_CASE("generation is deterministic and self-consistent") {
  auto a = generate_synthetic_kb(1);
  auto b = generate_synthetic_kb(1);
  CHECK(serialize_kb(a.kb) == serialize_kb(b.kb));
  CHECK(serialize_queries(a.split) == serialize_queries(b.split));
  CHECK(a.kb.entities().size() == 60);
  CHECK(a.kb.schema().entity_types.size() == 3);
  CHECK(a.split.train.size() == 40);
  CHECK(a.split.validation.size() == 20);
  CHECK(a.split.test.size() == 20);
  CHECK(serialize_kb(generate_synthetic_kb(2).kb) != serialize_kb(a.kb));

  for (std::uint64_t seed : {1, 2, 3, 17, 99}) {
    for (auto kind : {KbKind::relation_text, KbKind::image_text}) {
      SynthParams p;
      p.kind = kind;
      auto s = generate_synthetic_kb(seed, p);
      CHECK(validate_components(s.kb).empty());
      CHECK_NOTHROW(validate_queries(s.kb, s.split));
      for (const auto* part : {&s.split.train, &s.split.validation, &s.split.test})
        for (const auto& q : *part) {
          REQUIRE_FALSE(q.answers.empty());
          for (auto id : q.answers) CHECK(s.kb.is_candidate_type(s.kb.at(id).type));
        }
    }
  }
}

TEST_CASE("the shipped fixture is the seed-1 generator output") {
  auto syn = generate_synthetic_kb(1);
  auto dir = kbopt::testing::fixture_dir();
  CHECK(read_text_file(dir / "kb.jsonl") == serialize_kb(syn.kb));
  CHECK(read_text_file(dir / "queries.jsonl") == serialize_queries(syn.split));
}

TEST_CASE("infeasible generator parameters") {
  SynthParams p;
  p.n_entities = 0;
  CHECK_THROWS_AS(generate_synthetic_kb(1, p), InfeasibleParams);
  SynthParams q;
  q.max_answers = 0;
  CHECK_THROWS_AS(generate_synthetic_kb(1, q), InfeasibleParams);
}

TEST_CASE("validate_queries rejects bad answers") {
  auto syn = generate_synthetic_kb(1);
  auto split = syn.split;
  split.train[0].answers.clear();
  CHECK_THROWS_AS(validate_queries(syn.kb, split), InvalidKb);
  split = syn.split;
  split.train[0].answers = {EntityId{100000}};
  CHECK_THROWS_AS(validate_queries(syn.kb, split), InvalidKb);
  split = syn.split;
  split.test[0].query_id = split.train[0].query_id;
  CHECK_THROWS_AS(validate_queries(syn.kb, split), InvalidKb);
}

TEST_CASE("lookup helpers") {
  const auto& kb = kbopt::testing::fixture().kb;
  CHECK_THROWS_AS(kb.at(EntityId{999}), UnknownEntity);
  CHECK(kb.find(EntityId{999}) == nullptr);
  auto products = kb.ids_of_type("product");
  CHECK(std::is_sorted(products.begin(), products.end()));
  CHECK(kb.candidate_ids() == products);
  CHECK_THROWS_AS(split_by_name(kbopt::testing::fixture().split, "bogus"), ConfigError);
}
