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

#include "kbopt/config.hpp"

#include <set>

#include <json.hpp>

#include "kbopt/io.hpp"

namespace kbopt {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void only_keys(const json& j, const std::string& section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown config key '" + section + "." + k + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void read_budget(const json& j, ExecBudget& b) {
  only_keys(j, "optimizer.budget", {"wall_deadline_ms", "max_llm_calls", "max_statements"});
  if (j.contains("wall_deadline_ms")) b.wall_deadline = std::chrono::milliseconds(j.at("wall_deadline_ms").get<long long>());
  if (j.contains("max_llm_calls") && !j.at("max_llm_calls").is_null())
    b.max_llm_calls = j.at("max_llm_calls").get<std::size_t>();
  read(j, "max_statements", b.max_statements);
}

void read_optimizer(const json& j, OptimizerConfig& o) {
  only_keys(j, "optimizer",
            {"upper_bound_l", "lower_bound_h", "batch_size", "iterations", "memory_top_k",
             "actor_retry_limit", "primary_metric", "seed", "budget", "adaptive_negative_bound",
             "inclusive_bounds", "parallelism", "n_example_queries"});
  read(j, "upper_bound_l", o.upper_bound_l);
  read(j, "lower_bound_h", o.lower_bound_h);
  read(j, "batch_size", o.batch_size);
  read(j, "iterations", o.iterations);
  read(j, "memory_top_k", o.memory_top_k);
  read(j, "actor_retry_limit", o.actor_retry_limit);
  if (j.contains("primary_metric")) o.primary_metric = primary_metric_from_string(j.at("primary_metric").get<std::string>());
  read(j, "seed", o.seed);
  if (j.contains("budget")) read_budget(j.at("budget"), o.budget);
  read(j, "adaptive_negative_bound", o.adaptive_negative_bound);
  read(j, "inclusive_bounds", o.inclusive_bounds);
  read(j, "parallelism", o.parallelism);
  read(j, "n_example_queries", o.n_example_queries);
}

void read_backend(const json& j, BackendConfig& b, const std::filesystem::path& base) {
  only_keys(j, "backend",
            {"kind", "endpoint", "model", "auth_env", "retry", "max_concurrency", "request_timeout_ms", "script"});
  if (j.contains("kind")) b.kind = backend_kind_from_string(j.at("kind").get<std::string>());
  read(j, "endpoint", b.endpoint);
  read(j, "model", b.model);
  read(j, "auth_env", b.auth_env);
  read(j, "max_concurrency", b.max_concurrency);
  if (j.contains("request_timeout_ms"))
    b.request_timeout = std::chrono::milliseconds(j.at("request_timeout_ms").get<long long>());
  if (std::string script = j.value("script", std::string()); !script.empty())
    b.script_path = resolve(base, script);
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    only_keys(r, "backend.retry", {"max_attempts", "base_backoff_ms", "multiplier", "jitter", "jitter_seed"});
    read(r, "max_attempts", b.retry.max_attempts);
    if (r.contains("base_backoff_ms"))
      b.retry.base_backoff = std::chrono::milliseconds(r.at("base_backoff_ms").get<long long>());
    read(r, "multiplier", b.retry.multiplier);
    read(r, "jitter", b.retry.jitter);
    read(r, "jitter_seed", b.retry.jitter_seed);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    only_keys(j, "config", {"kb", "queries", "kb_kind", "optimizer", "candidate_policy", "backend", "tools", "sweep"});
    if (j.contains("kb")) c.kb_path = resolve(base_dir, j.at("kb").get<std::string>());
    if (j.contains("queries")) c.queries_path = resolve(base_dir, j.at("queries").get<std::string>());
    if (j.contains("kb_kind")) c.kb_kind = kb_kind_from_string(j.at("kb_kind").get<std::string>());
    if (j.contains("optimizer")) read_optimizer(j.at("optimizer"), c.optimizer);
    if (j.contains("candidate_policy")) {
      const auto& p = j.at("candidate_policy");
      only_keys(p, "candidate_policy", {"kind", "n"});
      std::string kind = p.value("kind", std::string("all_of_type"));
      if (kind == "all_of_type") c.optimizer.candidates.kind = CandidatePolicy::Kind::all_of_type;
      else if (kind == "top_n") c.optimizer.candidates.kind = CandidatePolicy::Kind::top_n;
      else throw ConfigError("candidate_policy.kind must be all_of_type or top_n");
      read(p, "n", c.optimizer.candidates.n);
    }
    if (j.contains("backend")) read_backend(j.at("backend"), c.backend, base_dir);
    if (j.contains("tools")) {
      const auto& t = j.at("tools");
      only_keys(t, "tools", {"manifest", "llm_mode"});
      read(t, "manifest", c.tools_manifest);
      std::string mode = t.value("llm_mode", std::string("llm"));
      if (mode != "llm" && mode != "rule_based") throw ConfigError("tools.llm_mode must be llm or rule_based");
      c.tool_options.rule_based_parse = mode == "rule_based";
      if (c.tools_manifest.size() > 5 && c.tools_manifest.ends_with(".json"))
        c.tools_manifest = resolve(base_dir, c.tools_manifest).string();
    }
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      only_keys(s, "sweep", {"l", "h"});
      read(s, "l", c.sweep_l);
      read(s, "h", c.sweep_h);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text_file(path), path.parent_path());
}

std::string run_config_json(const RunConfig& c) {
  const auto& o = c.optimizer;
  ordered_json j;
  if (c.kb_path) j["kb"] = c.kb_path->string();
  if (c.queries_path) j["queries"] = c.queries_path->string();
  j["kb_kind"] = to_string(c.kb_kind);
  ordered_json budget = {{"wall_deadline_ms", o.budget.wall_deadline.count()},
                         {"max_llm_calls", nullptr},
                         {"max_statements", o.budget.max_statements}};
  if (o.budget.max_llm_calls) budget["max_llm_calls"] = *o.budget.max_llm_calls;
  j["optimizer"] = {{"upper_bound_l", o.upper_bound_l},
                    {"lower_bound_h", o.lower_bound_h},
                    {"batch_size", o.batch_size},
                    {"iterations", o.iterations},
                    {"memory_top_k", o.memory_top_k},
                    {"actor_retry_limit", o.actor_retry_limit},
                    {"primary_metric", to_string(o.primary_metric)},
                    {"seed", o.seed},
                    {"budget", budget},
                    {"adaptive_negative_bound", o.adaptive_negative_bound},
                    {"inclusive_bounds", o.inclusive_bounds},
                    {"parallelism", o.parallelism},
                    {"n_example_queries", o.n_example_queries}};
  j["candidate_policy"] = {
      {"kind", o.candidates.kind == CandidatePolicy::Kind::all_of_type ? "all_of_type" : "top_n"},
      {"n", o.candidates.n}};
  const auto& b = c.backend;
  j["backend"] = {{"kind", to_string(b.kind)},
                  {"endpoint", b.endpoint},
                  {"model", b.model},
                  {"auth_env", b.auth_env},
                  {"retry",
                   {{"max_attempts", b.retry.max_attempts},
                    {"base_backoff_ms", b.retry.base_backoff.count()},
                    {"multiplier", b.retry.multiplier},
                    {"jitter", b.retry.jitter},
                    {"jitter_seed", b.retry.jitter_seed}}},
                  {"max_concurrency", b.max_concurrency},
                  {"request_timeout_ms", b.request_timeout.count()},
                  {"script", b.script_path.string()}};
  j["tools"] = {{"manifest", c.tools_manifest}, {"llm_mode", c.tool_options.rule_based_parse ? "rule_based" : "llm"}};
  j["sweep"] = {{"l", c.sweep_l}, {"h", c.sweep_h}};
  return j.dump(2) + "\n";
}

}  // namespace kbopt
