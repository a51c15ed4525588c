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

#include "kbopt/gateway.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kbopt/text.hpp"

namespace kbopt {

using nlohmann::json;

GatewayError::GatewayError(Kind kind, const std::string& what)
    : Error(to_string(kind) + ": " + what), kind_(kind) {}

std::string to_string(GatewayError::Kind kind) {
  switch (kind) {
    case GatewayError::Kind::auth: return "AuthError";
    case GatewayError::Kind::rate_limited: return "RateLimited";
    case GatewayError::Kind::transport: return "TransportError";
    case GatewayError::Kind::malformed: return "MalformedReply";
    case GatewayError::Kind::script_exhausted: return "ScriptExhausted";
  }
  return "GatewayError";
}

std::string to_string(BackendKind kind) { return kind == BackendKind::http ? "http" : "scripted"; }

BackendKind backend_kind_from_string(const std::string& name) {
  if (name == "http") return BackendKind::http;
  if (name == "scripted") return BackendKind::scripted;
  throw ConfigError("unknown backend kind '" + name + "' (expected scripted or http)");
}

std::chrono::duration<double, std::milli> RetryPolicy::nominal_delay(int retry) const {
  return std::chrono::duration<double, std::milli>(static_cast<double>(base_backoff.count()) *
                                                   std::pow(multiplier, retry));
}

void BackendConfig::validate() const {
  if (kind == BackendKind::http) {
    if (endpoint.empty()) throw ConfigError("http backend requires an endpoint");
    if (model.empty()) throw ConfigError("http backend requires a model name");
  } else if (script_path.empty()) {
    throw ConfigError("scripted backend requires a script path");
  }
  if (retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be at least 1");
  if (retry.jitter < 0.0 || retry.jitter >= 1.0) throw ConfigError("retry.jitter must lie in [0, 1)");
  if (max_concurrency < 1) throw ConfigError("max_concurrency must be at least 1");
}

// ---------------------------------------------------------------------------

std::vector<ScriptEntry> parse_script(const std::string& jsonl) {
  std::vector<ScriptEntry> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto rec = json::parse(line);
      ScriptEntry e;
      e.role = rec.at("role").get<std::string>();
      e.iteration = rec.at("iteration").get<int>();
      e.attempt = rec.value("attempt", 0);
      e.text = rec.at("text").get<std::string>();
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ConfigError("script line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries) {
  for (auto& e : entries) entries_[{e.role, e.iteration, e.attempt}].push_back(std::move(e.text));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read script " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::make_shared<ScriptedBackend>(parse_script(ss.str()));
}

Completion ScriptedBackend::complete(const CompletionRequest& request) {
  std::lock_guard lock(mu_);
  log_.push_back(request);
  Key key{request.role, request.iteration, request.attempt};
  auto it = entries_.find(key);
  std::size_t& pos = cursor_[key];
  if (it == entries_.end() || pos >= it->second.size())
    throw GatewayError(GatewayError::Kind::script_exhausted,
                       "no scripted reply left for role '" + request.role + "' iteration " +
                           std::to_string(request.iteration) + " attempt " +
                           std::to_string(request.attempt));
  return Completion{it->second[pos++], 1};
}

std::vector<CompletionRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [key, texts] : entries_) {
    auto c = cursor_.find(key);
    n += texts.size() - (c == cursor_.end() ? 0 : c->second);
  }
  return n;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<CompletionBackend> backend, BackendKind kind)
    : backend_(std::move(backend)), kind_(kind) {}

double Gateway::default_temperature(const std::string& role) const {
  if (kind_ == BackendKind::scripted) return 0.0;
  if (role == "actor") return 0.7;
  return 0.2;
}

Completion Gateway::complete(CompletionRequest request) {
  if (!request.temperature) request.temperature = default_temperature(request.role);
  ++calls_;
  return backend_->complete(request);
}

std::string Gateway::call_external(const std::string& role, const std::string& endpoint,
                                   const std::string& body) {
  ++calls_;
  if (auto* http = dynamic_cast<HttpBackend*>(backend_.get())) return http->post_json(endpoint, body);
  CompletionRequest req;
  req.role = role;
  req.prompt = body;
  req.temperature = 0.0;
  return backend_->complete(req).text;
}

std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config) {
  config.validate();
  if (config.kind == BackendKind::scripted) return ScriptedBackend::from_file(config.script_path);
  return std::make_shared<HttpBackend>(config);
}

std::unique_ptr<Gateway> make_gateway(const BackendConfig& config) {
  return std::make_unique<Gateway>(make_backend(config), config.kind);
}

// ---------------------------------------------------------------------------

NoPlanBlock::NoPlanBlock() : Error("completion contains no ```plan block") {}

MultiplePlanBlocks::MultiplePlanBlocks(std::size_t count)
    : Error("completion contains " + std::to_string(count) + " ```plan blocks; expected exactly one") {}

std::string extract_plan(const std::string& completion) {
  std::istringstream in(completion);
  std::string line;
  bool in_fence = false;
  bool in_plan = false;
  std::vector<std::string> blocks;
  std::string current;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = text::trim(line);
    if (t.rfind("```", 0) == 0) {
      if (!in_fence) {
        in_fence = true;
        in_plan = text::trim(t.substr(3)) == "plan";
        current.clear();
      } else if (t == "```") {
        if (in_plan) {
          if (!current.empty() && current.back() == '\n') current.pop_back();
          blocks.push_back(current);
        }
        in_fence = in_plan = false;
      } else if (in_plan) {
        current += line + "\n";
      }
      continue;
    }
    if (in_plan) current += line + "\n";
  }
  if (blocks.empty()) throw NoPlanBlock();
  if (blocks.size() > 1) throw MultiplePlanBlocks(blocks.size());
  return blocks.front();
}

}  // namespace kbopt
