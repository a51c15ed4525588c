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

#include "kbopt/kb.hpp"
#include "kbopt/io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kbopt {

using nlohmann::json;

std::string to_string(EntityId id) { return std::to_string(id.value); }

std::string to_string(KbKind kind) {
  return kind == KbKind::relation_text ? "relation_text" : "image_text";
}

KbKind kb_kind_from_string(const std::string& name) {
  if (name == "relation_text") return KbKind::relation_text;
  if (name == "image_text") return KbKind::image_text;
  throw ConfigError("unknown kb kind '" + name + "'");
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

DanglingEdge::DanglingEdge(EntityId missing)
    : Error("relation references missing entity " + to_string(missing)),
      missing_(missing) {}

DuplicateEntity::DuplicateEntity(EntityId id)
    : Error("duplicate entity id " + to_string(id)), id_(id) {}

UnknownEntity::UnknownEntity(EntityId id)
    : Error("unknown entity " + to_string(id)), id_(id) {}

UnknownType::UnknownType(const std::string& type)
    : Error("unknown entity type '" + type + "'") {}

namespace {

bool contains_str(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

struct DisjointSets {
  std::vector<std::size_t> parent;

  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Smaller index becomes the root so labels follow ascending entity order.
    if (b < a) std::swap(a, b);
    parent[b] = a;
  }
};

}  // namespace

std::vector<int> compute_components(std::span<const Entity> entities,
                                    std::span<const Relation> relations) {
  std::vector<std::size_t> order(entities.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entities[a].id < entities[b].id;
  });
  // rank = position in ascending-id order
  std::unordered_map<std::uint64_t, std::size_t> rank;
  for (std::size_t r = 0; r < order.size(); ++r) rank[entities[order[r]].id.value] = r;

  DisjointSets sets(entities.size());
  for (const auto& rel : relations) {
    auto s = rank.find(rel.src.value);
    auto d = rank.find(rel.dst.value);
    if (s == rank.end()) throw DanglingEdge(rel.src);
    if (d == rank.end()) throw DanglingEdge(rel.dst);
    sets.unite(s->second, d->second);
  }

  std::vector<int> label_of_root(entities.size(), -1);
  int next = 0;
  std::vector<int> by_rank(entities.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    std::size_t root = sets.find(r);
    if (label_of_root[root] < 0) label_of_root[root] = next++;
    by_rank[r] = label_of_root[root];
  }
  std::vector<int> labels(entities.size());
  for (std::size_t r = 0; r < order.size(); ++r) labels[order[r]] = by_rank[r];
  return labels;
}

KnowledgeBase::KnowledgeBase(KbKind kind, KbSchema schema, std::vector<Entity> entities,
                             std::vector<Relation> relations, ComponentLabels labels)
    : kind_(kind),
      schema_(std::move(schema)),
      entities_(std::move(entities)),
      relations_(std::move(relations)) {
  if (schema_.description.empty()) throw InvalidKb("schema description is empty");
  for (const auto& t : schema_.candidate_types) {
    if (!contains_str(schema_.entity_types, t))
      throw InvalidKb("candidate type '" + t + "' is not an entity type");
  }

  std::sort(entities_.begin(), entities_.end(),
            [](const Entity& a, const Entity& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    const auto& e = entities_[i];
    if (!index_.emplace(e.id.value, i).second) throw DuplicateEntity(e.id);
    if (e.type.empty()) throw InvalidKb("entity " + to_string(e.id) + " has an empty type");
    if (!contains_str(schema_.entity_types, e.type))
      throw InvalidKb("entity " + to_string(e.id) + " has unknown type '" + e.type + "'");
    if (kind_ == KbKind::relation_text && !e.phrases.empty())
      throw InvalidKb("entity " + to_string(e.id) + " carries phrases in a relation-text kb");
    if (kind_ == KbKind::image_text && e.phrases.empty())
      throw InvalidKb("image entity " + to_string(e.id) + " has no phrases");
  }

  out_.resize(entities_.size());
  in_.resize(entities_.size());
  std::set<std::tuple<std::uint64_t, std::uint64_t, std::string>> seen;
  for (std::size_t r = 0; r < relations_.size(); ++r) {
    const auto& rel = relations_[r];
    auto s = index_.find(rel.src.value);
    if (s == index_.end()) throw DanglingEdge(rel.src);
    auto d = index_.find(rel.dst.value);
    if (d == index_.end()) throw DanglingEdge(rel.dst);
    if (!contains_str(schema_.relation_types, rel.type))
      throw InvalidKb("unknown relation type '" + rel.type + "'");
    if (!seen.emplace(rel.src.value, rel.dst.value, rel.type).second)
      throw InvalidKb("duplicate relation (" + to_string(rel.src) + ", " + to_string(rel.dst) +
                      ", " + rel.type + ")");
    out_[s->second].push_back(r);
    in_[d->second].push_back(r);
  }

  if (labels == ComponentLabels::recompute) {
    auto comp = compute_components(entities_, relations_);
    for (std::size_t i = 0; i < entities_.size(); ++i) entities_[i].component_id = comp[i];
  }
}

std::size_t KnowledgeBase::index_of(EntityId id) const {
  auto it = index_.find(id.value);
  if (it == index_.end()) throw UnknownEntity(id);
  return it->second;
}

bool KnowledgeBase::contains(EntityId id) const { return index_.count(id.value) != 0; }

const Entity* KnowledgeBase::find(EntityId id) const {
  auto it = index_.find(id.value);
  return it == index_.end() ? nullptr : &entities_[it->second];
}

const Entity& KnowledgeBase::at(EntityId id) const { return entities_[index_of(id)]; }

bool KnowledgeBase::has_type(const std::string& type) const {
  return contains_str(schema_.entity_types, type);
}

bool KnowledgeBase::is_candidate_type(const std::string& type) const {
  return contains_str(schema_.candidate_types, type);
}

std::vector<EntityId> KnowledgeBase::ids_of_type(const std::string& type) const {
  if (!has_type(type)) throw UnknownType(type);
  std::vector<EntityId> ids;
  for (const auto& e : entities_)
    if (e.type == type) ids.push_back(e.id);
  return ids;
}

std::vector<EntityId> KnowledgeBase::candidate_ids() const {
  std::vector<EntityId> ids;
  for (const auto& e : entities_)
    if (is_candidate_type(e.type)) ids.push_back(e.id);
  return ids;
}

std::span<const std::size_t> KnowledgeBase::out_edges(EntityId id) const {
  return out_[index_of(id)];
}

std::span<const std::size_t> KnowledgeBase::in_edges(EntityId id) const {
  return in_[index_of(id)];
}

std::vector<ComponentViolation> validate_components(const KnowledgeBase& kb) {
  const auto& ents = kb.entities();
  auto truth = compute_components(ents, kb.relations());

  // entities grouped by true component, in ascending id order
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ents.size(); ++i) groups[truth[i]].push_back(i);

  std::vector<ComponentViolation> out;
  std::map<int, int> owner;  // stored label -> true component that claimed it
  for (const auto& [comp, members] : groups) {
    std::set<int> stored;
    for (auto i : members) stored.insert(ents[i].component_id);
    ComponentViolation v;
    for (auto i : members) v.entities.push_back(ents[i].id);
    if (stored.size() > 1) {
      v.reason = "connected entities carry different component ids";
      out.push_back(std::move(v));
      continue;
    }
    int label = *stored.begin();
    auto [it, fresh] = owner.emplace(label, comp);
    if (!fresh) {
      v.reason = "component id " + std::to_string(label) +
                 " is shared with a disconnected component";
      out.push_back(std::move(v));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

template <typename T>
T field(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) throw ParseError(line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(line, std::string("field '") + key + "' has the wrong type");
  }
}

template <typename F>
void for_each_record(const std::string& text, F&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(lineno, "record is not a JSON object");
    fn(rec, lineno);
  }
}

EntityId entity_id_field(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0)
    throw ParseError(line, std::string("field '") + key + "' must be a non-negative integer");
  return EntityId{it->get<std::uint64_t>()};
}

}  // namespace

std::string serialize_kb(const KnowledgeBase& kb) {
  std::string out;
  const auto& s = kb.schema();
  json schema = {{"kind", "schema"},
                 {"kb_kind", to_string(kb.kind())},
                 {"entity_types", s.entity_types},
                 {"relation_types", s.relation_types},
                 {"candidate_types", s.candidate_types},
                 {"description", s.description}};
  out += schema.dump() + "\n";
  for (const auto& e : kb.entities()) {
    json rec = {{"kind", "entity"}, {"id", e.id.value}, {"type", e.type}, {"document", e.document}};
    if (!e.phrases.empty()) {
      json phrases = json::array();
      for (const auto& p : e.phrases) phrases.push_back({{"patch_id", p.patch_id}, {"phrase", p.text}});
      rec["phrases"] = std::move(phrases);
    }
    out += rec.dump() + "\n";
  }
  for (const auto& r : kb.relations()) {
    json rec = {{"kind", "relation"}, {"src", r.src.value}, {"dst", r.dst.value}, {"rel", r.type}};
    out += rec.dump() + "\n";
  }
  return out;
}

KnowledgeBase parse_kb(const std::string& text, KbKind kind) {
  std::optional<KbSchema> schema;
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::unordered_map<std::uint64_t, std::size_t> entity_line;

  for_each_record(text, [&](const json& rec, std::size_t line) {
    auto record_kind = field<std::string>(rec, "kind", line);
    if (record_kind == "schema") {
      if (schema) throw ParseError(line, "more than one schema record");
      if (rec.contains("kb_kind") && rec["kb_kind"] != to_string(kind))
        throw ParseError(line, "schema declares kb kind " + rec["kb_kind"].dump() +
                                   " but " + to_string(kind) + " was requested");
      schema = KbSchema{field<std::vector<std::string>>(rec, "entity_types", line),
                        field<std::vector<std::string>>(rec, "relation_types", line),
                        field<std::vector<std::string>>(rec, "candidate_types", line),
                        field<std::string>(rec, "description", line)};
    } else if (record_kind == "entity") {
      Entity e;
      e.id = entity_id_field(rec, "id", line);
      e.type = field<std::string>(rec, "type", line);
      e.document = field<std::string>(rec, "document", line);
      if (auto it = rec.find("phrases"); it != rec.end()) {
        if (!it->is_array()) throw ParseError(line, "field 'phrases' must be an array");
        for (const auto& p : *it) {
          if (!p.is_object()) throw ParseError(line, "phrase entry must be an object");
          e.phrases.push_back({field<std::int64_t>(p, "patch_id", line),
                               field<std::string>(p, "phrase", line)});
        }
      }
      if (!entity_line.emplace(e.id.value, line).second) throw DuplicateEntity(e.id);
      entities.push_back(std::move(e));
    } else if (record_kind == "relation") {
      relations.push_back({entity_id_field(rec, "src", line), entity_id_field(rec, "dst", line),
                           field<std::string>(rec, "rel", line)});
    } else {
      throw ParseError(line, "unknown record kind '" + record_kind + "'");
    }
  });
  if (!schema) throw ParseError(0, "no schema record");
  return KnowledgeBase(kind, std::move(*schema), std::move(entities), std::move(relations),
                       ComponentLabels::recompute);
}

KnowledgeBase load_kb(const std::filesystem::path& path, KbKind kind) {
  return parse_kb(read_text_file(path), kind);
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
  write_text_file(path, serialize_kb(kb));
}

std::string serialize_queries(const QuerySplit& split) {
  std::string out;
  auto emit = [&](const std::vector<LabeledQuery>& qs, const char* name) {
    for (const auto& q : qs) {
      json answers = json::array();
      for (auto a : q.answers) answers.push_back(a.value);
      json rec = {{"query_id", q.query_id}, {"split", name}, {"text", q.text}, {"answers", answers}};
      out += rec.dump() + "\n";
    }
  };
  emit(split.train, "train");
  emit(split.validation, "validation");
  emit(split.test, "test");
  return out;
}

QuerySplit parse_queries(const std::string& text) {
  QuerySplit split;
  std::set<std::int64_t> ids;
  for_each_record(text, [&](const json& rec, std::size_t line) {
    LabeledQuery q;
    q.query_id = field<std::int64_t>(rec, "query_id", line);
    q.text = field<std::string>(rec, "text", line);
    auto answers = rec.find("answers");
    if (answers == rec.end() || !answers->is_array())
      throw ParseError(line, "field 'answers' must be an array");
    for (const auto& a : *answers) {
      if (!a.is_number_integer() || a.get<std::int64_t>() < 0)
        throw ParseError(line, "answer ids must be non-negative integers");
      q.answers.push_back(EntityId{a.get<std::uint64_t>()});
    }
    std::sort(q.answers.begin(), q.answers.end());
    q.answers.erase(std::unique(q.answers.begin(), q.answers.end()), q.answers.end());
    if (q.answers.empty()) throw ParseError(line, "query has no answers");
    if (!ids.insert(q.query_id).second)
      throw ParseError(line, "duplicate query_id " + std::to_string(q.query_id));
    auto name = field<std::string>(rec, "split", line);
    if (name == "train") split.train.push_back(std::move(q));
    else if (name == "validation") split.validation.push_back(std::move(q));
    else if (name == "test") split.test.push_back(std::move(q));
    else throw ParseError(line, "unknown split '" + name + "'");
  });
  return split;
}

QuerySplit load_queries(const std::filesystem::path& path) {
  return parse_queries(read_text_file(path));
}

void save_queries(const QuerySplit& split, const std::filesystem::path& path) {
  write_text_file(path, serialize_queries(split));
}

void validate_queries(const KnowledgeBase& kb, const QuerySplit& split) {
  std::set<std::int64_t> ids;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& q : *part) {
      if (!ids.insert(q.query_id).second)
        throw InvalidKb("query id " + std::to_string(q.query_id) + " appears twice");
      if (q.answers.empty())
        throw InvalidKb("query " + std::to_string(q.query_id) + " has no answers");
      for (auto a : q.answers) {
        const Entity* e = kb.find(a);
        if (!e)
          throw InvalidKb("answer " + to_string(a) + " of query " + std::to_string(q.query_id) +
                          " is not in the kb");
        if (!kb.is_candidate_type(e->type))
          throw InvalidKb("answer " + to_string(a) + " of query " + std::to_string(q.query_id) +
                          " has non-candidate type '" + e->type + "'");
      }
    }
  }
}

const std::vector<LabeledQuery>& split_by_name(const QuerySplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw ConfigError("unknown split '" + name + "' (expected train, validation or test)");
}

}  // namespace kbopt
