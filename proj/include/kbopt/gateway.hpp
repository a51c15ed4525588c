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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "kbopt/error.hpp"

namespace kbopt {

class GatewayError : public Error {
 public:
  enum class Kind { auth, rate_limited, transport, malformed, script_exhausted };

  GatewayError(Kind kind, const std::string& what);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string to_string(GatewayError::Kind kind);

struct CompletionRequest {
  std::string role;  // "actor", "contrastor", or a tool's gateway role
  std::string prompt;
  std::optional<double> temperature;  // unset: the gateway's per-role default
  int max_output_tokens = 2048;
  int iteration = 0;
  int attempt = 0;
};

struct Completion {
  std::string text;
  int attempts = 1;
};

enum class BackendKind { http, scripted };

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& name);

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_backoff{500};
  double multiplier = 2.0;
  double jitter = 0.2;  // each delay is scaled by a factor drawn from [1 - jitter, 1 + jitter]
  std::uint64_t jitter_seed = 0;

  // Delay before retry number `retry` (0 = first retry) without jitter.
  std::chrono::duration<double, std::milli> nominal_delay(int retry) const;
};

struct BackendConfig {
  BackendKind kind = BackendKind::scripted;
  std::string endpoint;
  std::string model;
  std::string auth_env = "OPENAI_API_KEY";
  RetryPolicy retry;
  int max_concurrency = 4;
  std::chrono::milliseconds request_timeout{60000};
  std::filesystem::path script_path;

  // Throws ConfigError: http needs endpoint and model, scripted needs a script.
  void validate() const;
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual Completion complete(const CompletionRequest& request) = 0;
};

struct ScriptEntry {
  std::string role;
  int iteration = 0;
  int attempt = 0;
  std::string text;
};

// Replays canned completions keyed by (role, iteration, attempt). Entries
// sharing a key are served in file order.
class ScriptedBackend : public CompletionBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  Completion complete(const CompletionRequest& request) override;

  std::vector<CompletionRequest> requests() const;
  std::size_t remaining() const;

 private:
  using Key = std::tuple<std::string, int, int>;
  mutable std::mutex mu_;
  std::map<Key, std::vector<std::string>> entries_;
  std::map<Key, std::size_t> cursor_;
  std::vector<CompletionRequest> log_;
};

std::vector<ScriptEntry> parse_script(const std::string& jsonl);

class HttpBackend : public CompletionBackend {
 public:
  explicit HttpBackend(BackendConfig config);
  ~HttpBackend() override;

  Completion complete(const CompletionRequest& request) override;

  // POST a JSON body to an arbitrary URL under the same retry, cap and auth
  // rules; returns the response body.
  std::string post_json(const std::string& url, const std::string& body, int* attempts = nullptr);

 private:
  double next_jitter_factor();

  BackendConfig config_;
  struct Limiter;
  std::unique_ptr<Limiter> limiter_;
  std::mutex rng_mu_;
  std::uint64_t rng_state_;
};

class Gateway {
 public:
  Gateway(std::shared_ptr<CompletionBackend> backend, BackendKind kind);

  Completion complete(CompletionRequest request);
  double default_temperature(const std::string& role) const;

  // External tools are reached over HTTP only; a scripted gateway answers
  // them from its script under the tool's role instead.
  std::string call_external(const std::string& role, const std::string& endpoint,
                            const std::string& body);

  std::size_t calls() const { return calls_.load(); }
  BackendKind kind() const { return kind_; }
  CompletionBackend& backend() { return *backend_; }

 private:
  std::shared_ptr<CompletionBackend> backend_;
  BackendKind kind_;
  std::atomic<std::size_t> calls_{0};
};

std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config);
std::unique_ptr<Gateway> make_gateway(const BackendConfig& config);

class NoPlanBlock : public Error {
 public:
  NoPlanBlock();
};

class MultiplePlanBlocks : public Error {
 public:
  explicit MultiplePlanBlocks(std::size_t count);
};

// Interior of the single ```plan fenced block in a completion.
std::string extract_plan(const std::string& completion);

}  // namespace kbopt
