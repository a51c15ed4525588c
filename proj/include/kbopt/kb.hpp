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

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbopt/error.hpp"

namespace kbopt {

struct EntityId {
  std::uint64_t value = 0;

  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

std::string to_string(EntityId id);

enum class KbKind { relation_text, image_text };

std::string to_string(KbKind kind);
KbKind kb_kind_from_string(const std::string& name);

// One annotated region of an image entity. Coordinates are opaque.
struct Phrase {
  std::int64_t patch_id = 0;
  std::string text;

  friend bool operator==(const Phrase&, const Phrase&) = default;
};

struct Entity {
  EntityId id;
  std::string type;
  std::string document;
  int component_id = 0;
  std::vector<Phrase> phrases;

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct Relation {
  EntityId src;
  EntityId dst;
  std::string type;

  friend bool operator==(const Relation&, const Relation&) = default;
};

struct KbSchema {
  std::vector<std::string> entity_types;
  std::vector<std::string> relation_types;
  std::vector<std::string> candidate_types;
  std::string description;

  friend bool operator==(const KbSchema&, const KbSchema&) = default;
};

struct LabeledQuery {
  std::int64_t query_id = 0;
  std::string text;
  std::vector<EntityId> answers;  // ascending, unique

  friend bool operator==(const LabeledQuery&, const LabeledQuery&) = default;
};

struct QuerySplit {
  std::vector<LabeledQuery> train;
  std::vector<LabeledQuery> validation;
  std::vector<LabeledQuery> test;

  friend bool operator==(const QuerySplit&, const QuerySplit&) = default;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DanglingEdge : public Error {
 public:
  explicit DanglingEdge(EntityId missing);
  EntityId missing() const { return missing_; }

 private:
  EntityId missing_;
};

class DuplicateEntity : public Error {
 public:
  explicit DuplicateEntity(EntityId id);
  EntityId id() const { return id_; }

 private:
  EntityId id_;
};

// Schema-level inconsistency: unknown types, duplicate relations, phrase rules.
class InvalidKb : public Error {
 public:
  using Error::Error;
};

class UnknownEntity : public Error {
 public:
  explicit UnknownEntity(EntityId id);
  EntityId id() const { return id_; }

 private:
  EntityId id_;
};

class UnknownType : public Error {
 public:
  explicit UnknownType(const std::string& type);
};

enum class ComponentLabels { recompute, keep };

class KnowledgeBase {
 public:
  KnowledgeBase(KbKind kind, KbSchema schema, std::vector<Entity> entities,
                std::vector<Relation> relations,
                ComponentLabels labels = ComponentLabels::recompute);

  KbKind kind() const { return kind_; }
  const KbSchema& schema() const { return schema_; }
  // Sorted by ascending id.
  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Relation>& relations() const { return relations_; }

  bool contains(EntityId id) const;
  const Entity* find(EntityId id) const;
  const Entity& at(EntityId id) const;  // throws UnknownEntity

  bool has_type(const std::string& type) const;
  bool is_candidate_type(const std::string& type) const;
  std::vector<EntityId> ids_of_type(const std::string& type) const;
  std::vector<EntityId> candidate_ids() const;

  // Indices into relations(), in file order.
  std::span<const std::size_t> out_edges(EntityId id) const;
  std::span<const std::size_t> in_edges(EntityId id) const;

  friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
    return a.kind_ == b.kind_ && a.schema_ == b.schema_ &&
           a.entities_ == b.entities_ && a.relations_ == b.relations_;
  }

 private:
  std::size_t index_of(EntityId id) const;

  KbKind kind_;
  KbSchema schema_;
  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
};

// Union-find labeling, components numbered by their smallest entity id.
std::vector<int> compute_components(std::span<const Entity> entities,
                                    std::span<const Relation> relations);

struct ComponentViolation {
  std::vector<EntityId> entities;
  std::string reason;
};

// Empty iff the stored component ids equal the union-find labeling up to a
// relabeling of component numbers.
std::vector<ComponentViolation> validate_components(const KnowledgeBase& kb);

KnowledgeBase load_kb(const std::filesystem::path& path, KbKind kind);
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);
std::string serialize_kb(const KnowledgeBase& kb);
KnowledgeBase parse_kb(const std::string& text, KbKind kind);

QuerySplit load_queries(const std::filesystem::path& path);
void save_queries(const QuerySplit& split, const std::filesystem::path& path);
std::string serialize_queries(const QuerySplit& split);
QuerySplit parse_queries(const std::string& text);

// Throws InvalidKb on empty answers, unknown answer ids, non-candidate answer
// types, or a query id shared between splits.
void validate_queries(const KnowledgeBase& kb, const QuerySplit& split);

const std::vector<LabeledQuery>& split_by_name(const QuerySplit& split,
                                               const std::string& name);

// ---------------------------------------------------------------------------
// Synthetic generation

class InfeasibleParams : public Error {
 public:
  using Error::Error;
};

struct SynthParams {
  KbKind kind = KbKind::relation_text;
  int n_entities = 60;
  int n_types = 3;
  int n_extra_edges = 30;
  int n_train = 40;
  int n_validation = 20;
  int n_test = 20;
  int max_answers = 3;
  int min_clauses = 1;
  int max_clauses = 3;
  double relation_clause_prob = 1.0;
};

// Ground truth the generator planted: per-entity attribute values (product
// attributes, or nothing for images), per-image phrases, per-query clauses.
// Product clauses appear in text as "<value> <attribute>" marker phrases,
// e.g. "Acme brand"; image clauses are the phrases themselves.
struct GeneratorManifest {
  std::map<EntityId, std::map<std::string, std::string>> entity_attributes;
  std::map<EntityId, std::vector<Phrase>> planted_phrases;
  std::map<std::int64_t, std::map<std::string, std::string>> query_clauses;
};

struct SyntheticKb {
  KnowledgeBase kb;
  QuerySplit split;
  GeneratorManifest manifest;
};

SyntheticKb generate_synthetic_kb(std::uint64_t seed, const SynthParams& params = {});

}  // namespace kbopt

template <>
struct std::hash<kbopt::EntityId> {
  std::size_t operator()(const kbopt::EntityId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
