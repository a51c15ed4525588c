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

#include <algorithm>
#include <array>
#include <random>
#include <set>

#include "kbopt/kb.hpp"

namespace kbopt {

namespace {

constexpr std::array kColors = {"red", "blue", "green", "black", "white", "yellow", "purple", "orange"};
constexpr std::array kMaterials = {"wool", "cotton", "leather", "steel", "bamboo", "linen"};
constexpr std::array kItems = {"hat", "jacket", "lamp", "backpack", "mug", "chair", "scarf", "bottle"};
constexpr std::array kBrands = {"Acme",  "Zenith",  "Orbit",  "Nimbus", "Vertex", "Solace",
                                "Quanta", "Pioneer", "Harbor", "Ember",  "Lumen",  "Cobalt"};
constexpr std::array kCategories = {"Apparel", "Home",   "Outdoor", "Kitchen", "Office",
                                    "Journey", "Garden", "Sports",  "Studio",  "Workshop"};
constexpr std::array kFillers = {"Customers praise its durability.", "Ships within two days.",
                                 "Ideal for everyday use.", "Comes with a one year warranty.",
                                 "Popular among frequent buyers.", "Easy to clean and maintain."};
constexpr std::array kPrefixes = {"Looking for a product with", "Find a product with",
                                  "I want something with", "Which product has"};

// Portable across standard libraries, unlike the <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

std::string indexed_name(const char* base, std::size_t i, std::size_t pool) {
  std::string name = base;
  if (i >= pool) name += std::to_string(i / pool + 1);
  return name;
}

void check_params(const SynthParams& p) {
  if (p.n_entities <= 0 || p.n_types <= 0) throw InfeasibleParams("entity and type counts must be positive");
  if (p.n_train < 0 || p.n_validation < 0 || p.n_test < 0 || p.n_extra_edges < 0)
    throw InfeasibleParams("query and edge counts must be non-negative");
  if (p.n_train + p.n_validation + p.n_test <= 0) throw InfeasibleParams("no queries requested");
  if (p.max_answers < 1) throw InfeasibleParams("max_answers must be at least 1");
  if (p.min_clauses < 1 || p.max_clauses > 3 || p.min_clauses > p.max_clauses)
    throw InfeasibleParams("clause counts must satisfy 1 <= min_clauses <= max_clauses <= 3");
  if (p.relation_clause_prob < 0.0 || p.relation_clause_prob > 1.0)
    throw InfeasibleParams("relation_clause_prob must lie in [0, 1]");
}

void assign_queries(std::vector<LabeledQuery> queries, const SynthParams& p, QuerySplit& split) {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto& q = queries[i];
    if (i < static_cast<std::size_t>(p.n_train)) split.train.push_back(std::move(q));
    else if (i < static_cast<std::size_t>(p.n_train + p.n_validation))
      split.validation.push_back(std::move(q));
    else split.test.push_back(std::move(q));
  }
}

SyntheticKb generate_relation_text(Rng& rng, const SynthParams& p) {
  const int n_types = p.n_types;
  const int n_candidates = n_types == 1 ? p.n_entities : p.n_entities * 2 / 3;
  const int n_others = p.n_entities - n_candidates;
  if (n_candidates < 1) throw InfeasibleParams("no entities of the candidate type");
  if (n_types > 1 && n_others < n_types - 1)
    throw InfeasibleParams("too few entities for " + std::to_string(n_types) + " types");
  if (p.max_answers > n_candidates)
    throw InfeasibleParams("max_answers " + std::to_string(p.max_answers) + " exceeds the " +
                           std::to_string(n_candidates) + " candidate entities");

  std::vector<std::string> types = {"product"};
  if (n_types >= 2) types.push_back("brand");
  if (n_types >= 3) types.push_back("category");
  for (int t = 3; t < n_types; ++t) types.push_back("misc" + std::to_string(t));

  // per-type entity counts; the first non-candidate type absorbs the remainder
  std::vector<int> counts(types.size(), 0);
  counts[0] = n_candidates;
  for (std::size_t t = 1; t < types.size(); ++t) counts[t] = n_others / (n_types - 1);
  if (types.size() > 1) counts[1] += n_others % (n_types - 1);

  KbSchema schema;
  schema.entity_types = types;
  schema.candidate_types = {"product"};
  if (n_types >= 2) schema.relation_types.push_back("has_brand");
  if (n_types >= 3) schema.relation_types.push_back("in_category");
  schema.relation_types.push_back("also_buy");
  if (n_types > 3) schema.relation_types.push_back("related_to");
  schema.description =
      "A product catalog. Each product document states its item, material, color and brand "
      "as phrases such as 'red color' or 'Acme brand'; products link to their brand and category.";

  std::vector<Entity> entities;
  std::vector<Relation> relations;
  GeneratorManifest manifest;

  std::uint64_t next_id = 0;
  std::vector<std::vector<EntityId>> by_type(types.size());
  for (std::size_t t = 0; t < types.size(); ++t)
    for (int i = 0; i < counts[t]; ++i) by_type[t].push_back(EntityId{next_id++});

  std::vector<std::string> brand_names, category_names;
  if (n_types >= 2)
    for (std::size_t i = 0; i < by_type[1].size(); ++i) {
      brand_names.push_back(indexed_name(kBrands[i % kBrands.size()], i, kBrands.size()));
      entities.push_back({by_type[1][i], "brand", brand_names.back() + " is a brand of consumer goods.", 0, {}});
    }
  if (n_types >= 3)
    for (std::size_t i = 0; i < by_type[2].size(); ++i) {
      category_names.push_back(indexed_name(kCategories[i % kCategories.size()], i, kCategories.size()));
      entities.push_back({by_type[2][i], "category", "The " + category_names.back() + " category of the catalog.", 0, {}});
    }
  for (std::size_t t = 3; t < types.size(); ++t)
    for (std::size_t i = 0; i < by_type[t].size(); ++i)
      entities.push_back({by_type[t][i], types[t], "Auxiliary record " + std::to_string(i) + " of kind " + types[t] + ".", 0, {}});

  struct Attrs {
    std::string item, material, color, brand;
  };
  std::vector<Attrs> products(by_type[0].size());
  for (std::size_t i = 0; i < by_type[0].size(); ++i) {
    auto& a = products[i];
    a.item = kItems[rng.below(kItems.size())];
    a.material = kMaterials[rng.below(kMaterials.size())];
    a.color = kColors[rng.below(kColors.size())];
    std::string doc = "Product: " + a.item + " item made of " + a.material + " material in " + a.color + " color";
    auto& attrs = manifest.entity_attributes[by_type[0][i]];
    attrs = {{"item", a.item}, {"material", a.material}, {"color", a.color}};
    if (!brand_names.empty()) {
      std::size_t b = rng.below(brand_names.size());
      a.brand = brand_names[b];
      doc += " by " + a.brand + " brand";
      attrs["brand"] = a.brand;
      relations.push_back({by_type[0][i], by_type[1][b], "has_brand"});
    }
    doc += ".";
    if (!category_names.empty()) {
      std::size_t c = rng.below(category_names.size());
      doc += " Listed under " + category_names[c] + " category.";
      attrs["category"] = category_names[c];
      relations.push_back({by_type[0][i], by_type[2][c], "in_category"});
    }
    std::size_t n_fill = rng.below(3);
    for (std::size_t f = 0; f < n_fill; ++f) doc += std::string(" ") + kFillers[rng.below(kFillers.size())];
    entities.push_back({by_type[0][i], "product", doc, 0, {}});
  }

  std::set<std::pair<std::uint64_t, std::uint64_t>> extra;
  if (by_type[0].size() > 1) {
    std::size_t max_pairs = by_type[0].size() * (by_type[0].size() - 1);
    std::size_t want = std::min<std::size_t>(p.n_extra_edges, max_pairs);
    while (extra.size() < want) {
      auto s = by_type[0][rng.below(by_type[0].size())];
      auto d = by_type[0][rng.below(by_type[0].size())];
      if (s == d || !extra.emplace(s.value, d.value).second) continue;
      relations.push_back({s, d, "also_buy"});
    }
  }
  for (std::size_t t = 3; t < types.size(); ++t)
    for (auto id : by_type[t]) relations.push_back({id, by_type[0][rng.below(by_type[0].size())], "related_to"});

  // queries
  const int n_queries = p.n_train + p.n_validation + p.n_test;
  std::vector<LabeledQuery> queries;
  for (int qi = 0; qi < n_queries; ++qi) {
    std::size_t anchor = rng.below(products.size());
    const Attrs& a = products[anchor];
    std::vector<std::string> order = {"item", "material", "color"};
    rng.shuffle(order);
    std::size_t n_clauses = p.min_clauses + rng.below(p.max_clauses - p.min_clauses + 1);
    bool use_brand = !a.brand.empty() && rng.unit() < p.relation_clause_prob;

    auto value_of = [](const Attrs& x, const std::string& key) -> const std::string& {
      if (key == "item") return x.item;
      if (key == "material") return x.material;
      if (key == "color") return x.color;
      return x.brand;
    };
    auto matches = [&](std::size_t used, bool brand) {
      std::vector<EntityId> out;
      for (std::size_t i = 0; i < products.size(); ++i) {
        bool ok = !brand || products[i].brand == a.brand;
        for (std::size_t k = 0; ok && k < used; ++k) ok = value_of(products[i], order[k]) == value_of(a, order[k]);
        if (ok) out.push_back(by_type[0][i]);
      }
      return out;
    };
    auto answers = matches(n_clauses, use_brand);
    while (answers.size() > static_cast<std::size_t>(p.max_answers)) {
      if (n_clauses < order.size()) ++n_clauses;
      else if (!use_brand && !a.brand.empty()) use_brand = true;
      else break;  // indistinguishable products are all valid answers
      answers = matches(n_clauses, use_brand);
    }

    std::map<std::string, std::string> clauses;
    std::vector<std::string> phrases;
    for (std::size_t k = 0; k < n_clauses; ++k) {
      clauses[order[k]] = value_of(a, order[k]);
      phrases.push_back(value_of(a, order[k]) + " " + order[k]);
    }
    std::string text = kPrefixes[rng.below(kPrefixes.size())];
    for (std::size_t k = 0; k < phrases.size(); ++k) text += (k == 0 ? " " : " and ") + phrases[k];
    if (use_brand) {
      clauses["brand"] = a.brand;
      text += " from " + a.brand + " brand";
    }
    manifest.query_clauses[qi] = std::move(clauses);
    queries.push_back({qi, std::move(text), std::move(answers)});
  }

  SyntheticKb out{KnowledgeBase(KbKind::relation_text, std::move(schema), std::move(entities),
                                std::move(relations)),
                  {},
                  std::move(manifest)};
  assign_queries(std::move(queries), p, out.split);
  return out;
}

SyntheticKb generate_image_text(Rng& rng, const SynthParams& p) {
  if (p.max_answers > p.n_entities)
    throw InfeasibleParams("max_answers " + std::to_string(p.max_answers) + " exceeds the " +
                           std::to_string(p.n_entities) + " candidate images");
  KbSchema schema{{"image"}, {}, {"image"},
                  "A collection of captioned images. Each image lists annotated regions, each "
                  "described by a short phrase such as 'red hat'."};
  std::vector<Entity> entities;
  GeneratorManifest manifest;
  std::vector<std::vector<std::string>> image_phrases;
  for (int i = 0; i < p.n_entities; ++i) {
    std::size_t n = 2 + rng.below(3);
    std::vector<std::string> phrases;
    while (phrases.size() < n) {
      std::string ph = std::string(kColors[rng.below(kColors.size())]) + " " + kItems[rng.below(kItems.size())];
      if (std::find(phrases.begin(), phrases.end(), ph) == phrases.end()) phrases.push_back(ph);
    }
    Entity e{EntityId{static_cast<std::uint64_t>(i)}, "image", "A photo showing", 0, {}};
    for (std::size_t k = 0; k < phrases.size(); ++k) {
      e.document += (k == 0 ? " a " : " and a ") + phrases[k];
      e.phrases.push_back({static_cast<std::int64_t>(k), phrases[k]});
    }
    e.document += ".";
    manifest.planted_phrases[e.id] = e.phrases;
    image_phrases.push_back(std::move(phrases));
    entities.push_back(std::move(e));
  }

  const int n_queries = p.n_train + p.n_validation + p.n_test;
  std::vector<LabeledQuery> queries;
  for (int qi = 0; qi < n_queries; ++qi) {
    std::size_t anchor = rng.below(image_phrases.size());
    auto order = image_phrases[anchor];
    rng.shuffle(order);
    std::size_t used = std::min<std::size_t>(order.size(), p.min_clauses + rng.below(p.max_clauses - p.min_clauses + 1));
    auto matches = [&](std::size_t k) {
      std::vector<EntityId> out;
      for (std::size_t i = 0; i < image_phrases.size(); ++i) {
        bool ok = true;
        for (std::size_t j = 0; ok && j < k; ++j)
          ok = std::find(image_phrases[i].begin(), image_phrases[i].end(), order[j]) != image_phrases[i].end();
        if (ok) out.push_back(EntityId{static_cast<std::uint64_t>(i)});
      }
      return out;
    };
    auto answers = matches(used);
    while (answers.size() > static_cast<std::size_t>(p.max_answers) && used < order.size())
      answers = matches(++used);
    std::map<std::string, std::string> clauses;
    std::string text = "Find an image showing";
    for (std::size_t k = 0; k < used; ++k) {
      clauses["phrase" + std::to_string(k)] = order[k];
      text += (k == 0 ? " a " : " and a ") + order[k];
    }
    manifest.query_clauses[qi] = std::move(clauses);
    queries.push_back({qi, std::move(text), std::move(answers)});
  }

  SyntheticKb out{KnowledgeBase(KbKind::image_text, std::move(schema), std::move(entities), {}),
                  {},
                  std::move(manifest)};
  assign_queries(std::move(queries), p, out.split);
  return out;
}

}  // namespace

SyntheticKb generate_synthetic_kb(std::uint64_t seed, const SynthParams& params) {
  check_params(params);
  Rng rng(seed);
  if (params.kind == KbKind::image_text) return generate_image_text(rng, params);
  return generate_relation_text(rng, params);
}

}  // namespace kbopt
