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

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kbopt/gateway.hpp"
#include "kbopt/llm_tools.hpp"
#include "kbopt/tools.hpp"

namespace kbopt {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<SemType, const char*>, 11> kSemTypeNames = {{
    {SemType::text, "text"},
    {SemType::text_list, "text_list"},
    {SemType::id_list, "id_list"},
    {SemType::id, "id"},
    {SemType::number, "number"},
    {SemType::map, "map"},
    {SemType::vector, "vector"},
    {SemType::vector_list, "vector_list"},
    {SemType::attr_map, "attr_map"},
    {SemType::relation_map, "relation_map"},
    {SemType::phrase_lists, "phrase_lists"},
}};

}  // namespace

std::string to_string(SemType t) {
  for (const auto& [type, name] : kSemTypeNames)
    if (type == t) return name;
  return "?";
}

SemType sem_type_from_string(const std::string& name) {
  for (const auto& [type, n] : kSemTypeNames)
    if (name == n) return type;
  throw ConfigError("unknown semantic type '" + name + "'");
}

std::string to_string(CostClass c) {
  switch (c) {
    case CostClass::local: return "local";
    case CostClass::llm: return "llm";
    case CostClass::external: return "external";
  }
  return "?";
}

DuplicateTool::DuplicateTool(const std::string& name) : Error("tool '" + name + "' is already registered") {}
UnknownTool::UnknownTool(const std::string& name) : Error("unknown tool '" + name + "'") {}

void ToolRegistry::register_tool(ToolSpec spec, ToolFn fn) {
  if (spec.name.empty()) throw ConfigError("tool name is empty");
  if (spec.description.empty()) throw ConfigError("tool '" + spec.name + "' has no description");
  if (spec.cost_class == CostClass::llm && spec.gateway_role.empty())
    throw ConfigError("llm tool '" + spec.name + "' does not declare its gateway role");
  if (!fn) throw ConfigError("tool '" + spec.name + "' has no implementation");
  if (entries_.count(spec.name)) throw DuplicateTool(spec.name);
  auto name = spec.name;
  entries_.emplace(std::move(name), Entry{std::move(spec), std::move(fn)});
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second.spec;
}

const ToolSpec& ToolRegistry::spec(std::string_view name) const {
  const auto* s = find(name);
  if (!s) throw UnknownTool(std::string(name));
  return *s;
}

Value ToolRegistry::invoke(std::string_view name, std::span<const Value> args, ToolContext& ctx) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UnknownTool(std::string(name));
  return it->second.fn(args, ctx);
}

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::string ToolRegistry::render_descriptions() const {
  std::string out;
  for (const auto& [name, entry] : entries_) {
    const auto& s = entry.spec;
    out += "- " + s.name + "(";
    for (std::size_t i = 0; i < s.params.size(); ++i)
      out += (i ? ", " : "") + s.params[i].name + ": " + to_string(s.params[i].type);
    out += ") -> " + to_string(s.returns);
    if (s.cost_class == CostClass::llm) out += " [calls the LLM]";
    if (s.cost_class == CostClass::external) out += " [external service]";
    out += "\n    " + s.description + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ToolSpec> parse_manifest(const std::string& json_text) {
  std::vector<ToolSpec> out;
  try {
    auto doc = json::parse(json_text);
    for (const auto& t : doc.at("tools")) {
      ToolSpec s;
      s.name = t.at("name").get<std::string>();
      for (const auto& p : t.at("params"))
        s.params.push_back({p.at("name").get<std::string>(), sem_type_from_string(p.at("type").get<std::string>())});
      s.returns = sem_type_from_string(t.at("returns").get<std::string>());
      s.description = t.at("description").get<std::string>();
      auto cost = t.value("cost_class", std::string("local"));
      if (cost == "local") s.cost_class = CostClass::local;
      else if (cost == "llm") s.cost_class = CostClass::llm;
      else if (cost == "external") s.cost_class = CostClass::external;
      else throw ConfigError("tool '" + s.name + "' has unknown cost class '" + cost + "'");
      s.gateway_role = t.value("gateway_role", std::string());
      s.endpoint = t.value("endpoint", std::string());
      s.impl = t.at("impl").get<std::string>();
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed tool manifest: ") + e.what());
  }
  return out;
}

std::vector<ToolSpec> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read tool manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::filesystem::path manifest_path(const std::string& name) {
  if (name.size() > 5 && name.ends_with(".json")) return name;
  std::filesystem::path dir = KBOPT_DATA_DIR;
  if (const char* env = std::getenv("KBOPT_DATA_DIR"); env && *env) dir = env;
  return dir / "manifests" / (name + ".json");
}

namespace {

struct Binding {
  std::vector<SemType> params;
  SemType returns;
  CostClass cost;
  std::function<ToolFn(const ToolSpec&, const ToolOptions&)> make;
};

const std::string& as_text(const Value& v) { return std::get<std::string>(v); }
const TextList& as_texts(const Value& v) { return std::get<TextList>(v); }
const IdList& as_ids(const Value& v) { return std::get<IdList>(v); }
EntityId as_id(const Value& v) { return std::get<EntityId>(v); }

Gateway& gateway_of(ToolContext& ctx, const ToolSpec& spec) {
  if (!ctx.gateway) throw Error("tool '" + spec.name + "' needs a gateway but none is configured");
  if (ctx.on_llm_call) ctx.on_llm_call();
  return *ctx.gateway;
}

template <typename F>
std::function<ToolFn(const ToolSpec&, const ToolOptions&)> local(F f) {
  return [f](const ToolSpec&, const ToolOptions&) -> ToolFn {
    return [f](std::span<const Value> a, ToolContext& ctx) -> Value { return f(a, ctx.kb); };
  };
}

template <typename F>
std::function<ToolFn(const ToolSpec&, const ToolOptions&)> llm(F f) {
  return [f](const ToolSpec& spec, const ToolOptions&) -> ToolFn {
    return [f, spec](std::span<const Value> a, ToolContext& ctx) -> Value {
      return f(a, ctx.kb, gateway_of(ctx, spec), spec.gateway_role);
    };
  };
}

using S = SemType;

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = {
      {"parse_attributes",
       {{S::text, S::text_list}, S::attr_map, CostClass::llm,
        [](const ToolSpec& spec, const ToolOptions& opt) -> ToolFn {
          return [spec, opt](std::span<const Value> a, ToolContext& ctx) -> Value {
            if (opt.rule_based_parse) return parse_attribute_rule_based(as_text(a[0]), as_texts(a[1]));
            return parse_attribute_from_query(as_text(a[0]), as_texts(a[1]), gateway_of(ctx, spec),
                                              spec.gateway_role);
          };
        }}},
      {"text_embedding",
       {{S::text_list}, S::vector_list, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase&) -> Value { return text_embedding(as_texts(a[0])); })}},
      {"full_info",
       {{S::id}, S::text, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value { return full_info(kb, as_id(a[0])); })}},
      {"entity_documents",
       {{S::id_list}, S::text_list, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value { return entity_documents(kb, as_ids(a[0])); })}},
      {"relation_dict",
       {{S::id}, S::relation_map, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value { return relation_dict(kb, as_id(a[0])); })}},
      {"entity_ids_by_type",
       {{S::text}, S::id_list, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value { return entity_ids_by_type(kb, as_text(a[0])); })}},
      {"entity_type",
       {{S::id}, S::text, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value { return entity_type(kb, as_id(a[0])); })}},
      {"embedding_similarity",
       {{S::vector, S::vector}, S::number, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase&) -> Value {
          return embedding_similarity(std::get<Embedding>(a[0]), std::get<Embedding>(a[1]));
        })}},
      {"query_entity_similarity",
       {{S::text, S::id_list}, S::map, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value {
          return query_entity_similarity(as_text(a[0]), as_ids(a[1]), kb);
        })}},
      {"exact_match",
       {{S::text, S::id_list}, S::map, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value {
          return exact_match_score(as_text(a[0]), as_ids(a[1]), kb);
        })}},
      {"token_match",
       {{S::text, S::id_list}, S::map, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value {
          return token_match_score(as_text(a[0]), as_ids(a[1]), kb);
        })}},
      {"phrase_exact_match",
       {{S::text, S::id_list}, S::map, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value {
          return phrase_exact_match_score(as_text(a[0]), as_ids(a[1]), kb);
        })}},
      {"phrase_f1",
       {{S::text, S::id_list}, S::map, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value {
          return phrase_f1_score(as_text(a[0]), as_ids(a[1]), kb);
        })}},
      {"bag_of_phrases",
       {{S::id_list}, S::phrase_lists, CostClass::local,
        local([](std::span<const Value> a, const KnowledgeBase& kb) -> Value { return bag_of_phrases(kb, as_ids(a[0])); })}},
      {"summarize",
       {{S::text_list}, S::text, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase&, Gateway& g, const std::string& role) -> Value {
          return summarize_texts_by_llm(as_texts(a[0]), g, role);
        })}},
      {"classify_entities",
       {{S::id_list, S::text_list}, S::text_list, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase& kb, Gateway& g, const std::string& role) -> Value {
          TextList docs;
          for (auto id : as_ids(a[0])) docs.push_back(full_info(kb, id));
          return classify_by_llm(docs, as_texts(a[1]), g, role);
        })}},
      {"classify_texts",
       {{S::text_list, S::text_list}, S::text_list, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase&, Gateway& g, const std::string& role) -> Value {
          return classify_by_llm(as_texts(a[0]), as_texts(a[1]), g, role);
        })}},
      {"extract_relevant",
       {{S::text_list, S::text}, S::text_list, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase&, Gateway& g, const std::string& role) -> Value {
          return extract_relevant_info_by_llm(as_texts(a[0]), as_text(a[1]), g, role);
        })}},
      {"check_requirements",
       {{S::id_list, S::text}, S::map, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase& kb, Gateway& g, const std::string& role) -> Value {
          return check_requirements_by_llm(as_ids(a[0]), as_text(a[1]), kb, g, role);
        })}},
      {"satisfaction_score",
       {{S::id_list, S::text}, S::map, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase& kb, Gateway& g, const std::string& role) -> Value {
          return satisfaction_score_by_llm(as_ids(a[0]), as_text(a[1]), kb, g, role);
        })}},
      {"vqa",
       {{S::text, S::id_list}, S::text_list, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase& kb, Gateway& g, const std::string& role) -> Value {
          return vqa_by_llm(as_text(a[0]), as_ids(a[1]), kb, g, role);
        })}},
      {"visual_attributes",
       {{S::text_list, S::id_list}, S::text_list, CostClass::llm,
        llm([](std::span<const Value> a, const KnowledgeBase& kb, Gateway& g, const std::string& role) -> Value {
          return extract_visual_attributes_by_llm(as_texts(a[0]), as_ids(a[1]), kb, g, role);
        })}},
  };
  return table;
}

ToolFn external_binding(const ToolSpec& spec) {
  for (const auto& p : spec.params)
    if (p.type != SemType::text)
      throw ConfigError("external tool '" + spec.name + "' may only take text parameters");
  if (spec.returns != SemType::text)
    throw ConfigError("external tool '" + spec.name + "' must return text");
  if (spec.endpoint.empty()) throw ConfigError("external tool '" + spec.name + "' has no endpoint");
  return [spec](std::span<const Value> a, ToolContext& ctx) -> Value {
    json args = json::object();
    for (std::size_t i = 0; i < spec.params.size(); ++i) args[spec.params[i].name] = as_text(a[i]);
    json body = {{"tool", spec.name}, {"args", args}};
    auto role = spec.gateway_role.empty() ? spec.name : spec.gateway_role;
    auto reply = gateway_of(ctx, spec).call_external(role, spec.endpoint, body.dump());
    try {
      auto parsed = json::parse(reply);
      return parsed.at("result").get<std::string>();
    } catch (const json::exception&) {
      throw GatewayError(GatewayError::Kind::malformed,
                         "external tool '" + spec.name + "' reply lacks a string 'result' field");
    }
  };
}

}  // namespace

ToolRegistry build_registry(const std::string& name, const std::vector<ToolSpec>& specs,
                            const ToolOptions& options) {
  ToolRegistry reg(name);
  for (const auto& spec : specs) {
    if (spec.impl == "external") {
      if (spec.cost_class != CostClass::external)
        throw ConfigError("tool '" + spec.name + "' uses the external binding but is not external");
      reg.register_tool(spec, external_binding(spec));
      continue;
    }
    auto it = bindings().find(spec.impl);
    if (it == bindings().end())
      throw ConfigError("tool '" + spec.name + "' names unknown implementation '" + spec.impl + "'");
    const Binding& b = it->second;
    std::vector<SemType> types;
    for (const auto& p : spec.params) types.push_back(p.type);
    if (types != b.params || spec.returns != b.returns)
      throw ConfigError("tool '" + spec.name + "' signature does not match implementation '" + spec.impl + "'");
    if (spec.cost_class != b.cost)
      throw ConfigError("tool '" + spec.name + "' declares cost class " + to_string(spec.cost_class) +
                        " but '" + spec.impl + "' is " + to_string(b.cost));
    reg.register_tool(spec, b.make(spec, options));
  }
  return reg;
}

ToolRegistry standard_registry(const std::string& manifest_name, const ToolOptions& options) {
  auto path = manifest_path(manifest_name);
  return build_registry(path.stem().string(), load_manifest(path), options);
}

}  // namespace kbopt
