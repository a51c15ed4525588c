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

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kbopt/kb.hpp"

namespace kbopt {

class Gateway;

inline constexpr std::size_t kEmbeddingDim = 256;
inline constexpr std::uint64_t kEmbeddingSeed = 0x5eedULL;

using Embedding = std::vector<double>;
using ScoreMap = std::map<EntityId, double>;
using TextList = std::vector<std::string>;
using IdList = std::vector<EntityId>;
using AttrMap = std::map<std::string, std::string>;
using RelationMap = std::map<std::string, IdList>;
using PhraseLists = std::vector<TextList>;

// Semantic types of tool parameters and results. The order matches Value.
enum class SemType {
  text,
  text_list,
  id_list,
  id,
  number,
  map,  // ScoreMap
  vector,
  vector_list,
  attr_map,
  relation_map,
  phrase_lists,
};

std::string to_string(SemType t);
SemType sem_type_from_string(const std::string& name);

using Value = std::variant<std::string, TextList, IdList, EntityId, double, ScoreMap, Embedding,
                           std::vector<Embedding>, AttrMap, RelationMap, PhraseLists>;

inline SemType type_of(const Value& v) { return static_cast<SemType>(v.index()); }

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t a, std::size_t b);
};

// ---------------------------------------------------------------------------
// Local tools. All are pure functions of their arguments.

std::vector<Embedding> text_embedding(std::span<const std::string> strings);
double embedding_similarity(const Embedding& a, const Embedding& b);

// Document followed by one "relation: id, id" line per relation_dict key,
// then the phrases of an image entity.
std::string full_info(const KnowledgeBase& kb, EntityId id);

ScoreMap exact_match_score(std::string_view needle, std::span<const EntityId> candidates,
                           const KnowledgeBase& kb);
ScoreMap token_match_score(std::string_view needle, std::span<const EntityId> candidates,
                           const KnowledgeBase& kb);
ScoreMap query_entity_similarity(std::string_view query, std::span<const EntityId> candidates,
                                 const KnowledgeBase& kb);

// Out-edges keyed by relation type, in-edges keyed "inv_<type>"; neighbors ascending.
RelationMap relation_dict(const KnowledgeBase& kb, EntityId id);

IdList entity_ids_by_type(const KnowledgeBase& kb, const std::string& type);
std::string entity_type(const KnowledgeBase& kb, EntityId id);
TextList entity_documents(const KnowledgeBase& kb, std::span<const EntityId> ids);
PhraseLists bag_of_phrases(const KnowledgeBase& kb, std::span<const EntityId> ids);

// Image variants: score against each phrase of the image, keep the best.
ScoreMap phrase_exact_match_score(std::string_view needle, std::span<const EntityId> candidates,
                                  const KnowledgeBase& kb);
ScoreMap phrase_f1_score(std::string_view needle, std::span<const EntityId> candidates,
                         const KnowledgeBase& kb);

// ---------------------------------------------------------------------------
// Registry

enum class CostClass { local, llm, external };

std::string to_string(CostClass c);

struct ParamSpec {
  std::string name;
  SemType type = SemType::text;

  friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct ToolSpec {
  std::string name;
  std::vector<ParamSpec> params;
  SemType returns = SemType::map;
  std::string description;
  CostClass cost_class = CostClass::local;
  std::string gateway_role;  // llm tools only
  std::string endpoint;      // external tools only
  std::string impl;          // key of the built-in implementation

  friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

struct ToolContext {
  const KnowledgeBase& kb;
  Gateway* gateway = nullptr;
  // Called before every gateway round trip; may throw to refuse the call.
  std::function<void()> on_llm_call;
};

using ToolFn = std::function<Value(std::span<const Value>, ToolContext&)>;

class DuplicateTool : public Error {
 public:
  explicit DuplicateTool(const std::string& name);
};

class UnknownTool : public Error {
 public:
  explicit UnknownTool(const std::string& name);
};

struct ToolOptions {
  // Answer ParseAttributeFromQuery from "<value> <attribute>" markers instead
  // of calling the gateway.
  bool rule_based_parse = false;
};

class ToolRegistry {
 public:
  ToolRegistry() = default;
  explicit ToolRegistry(std::string manifest_name) : manifest_name_(std::move(manifest_name)) {}

  void register_tool(ToolSpec spec, ToolFn fn);

  const ToolSpec* find(std::string_view name) const;
  const ToolSpec& spec(std::string_view name) const;
  Value invoke(std::string_view name, std::span<const Value> args, ToolContext& ctx) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  const std::string& manifest_name() const { return manifest_name_; }

  // Text substituted for the function-description slot of the actor prompt.
  std::string render_descriptions() const;

 private:
  struct Entry {
    ToolSpec spec;
    ToolFn fn;
  };
  std::map<std::string, Entry, std::less<>> entries_;
  std::string manifest_name_;
};

std::vector<ToolSpec> parse_manifest(const std::string& json_text);
std::vector<ToolSpec> load_manifest(const std::filesystem::path& path);

// data/manifests/<name>.json of the source tree, or $KBOPT_DATA_DIR when set.
std::filesystem::path manifest_path(const std::string& name);

// Binds every manifest entry to its built-in implementation.
ToolRegistry build_registry(const std::string& name, const std::vector<ToolSpec>& specs,
                            const ToolOptions& options = {});
ToolRegistry standard_registry(const std::string& manifest_name, const ToolOptions& options = {});

}  // namespace kbopt
