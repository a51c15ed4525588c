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
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "kbopt/cli.hpp"
#include "kbopt/config.hpp"
#include "kbopt/gateway.hpp"
#include "kbopt/io.hpp"
#include "kbopt/kb.hpp"
#include "kbopt/optimizer.hpp"
#include "kbopt/plan.hpp"
#include "kbopt/tools.hpp"

namespace kbopt::testing {

inline std::filesystem::path fixture_dir() {
  return std::filesystem::path(KBOPT_FIXTURE_DIR) / "synthetic_seed1";
}

inline const char* kPlanV1 =
    "let attrs = ParseAttributeFromQuery(query, [\"brand\"])\n"
    "let brand = ComputeExactMatchScore(attrs[\"brand\"], candidates)\n"
    "return brand\n";
inline const char* kPlanV2 =
    "let sim = ComputeQueryEntitySimilarity(query, candidates)\n"
    "return sim\n";
inline const char* kPlanV3 =
    "param w_brand = 0.7\n"
    "param w_sim = 0.3\n"
    "let attrs = ParseAttributeFromQuery(query, [\"brand\"])\n"
    "let brand = ComputeExactMatchScore(attrs[\"brand\"], candidates)\n"
    "let sim = ComputeQueryEntitySimilarity(query, candidates)\n"
    "let score = weighted_sum([brand, sim], [w_brand, w_sim])\n"
    "return score\n";
inline const char* kPlanV4 =
    "let tok = TokenMatchScore(query, candidates)\n"
    "return tok\n";

struct Fixture {
  RunConfig config;
  KnowledgeBase kb;
  QuerySplit split;
  ToolRegistry registry;
};

inline const Fixture& fixture() {
  static const Fixture f = [] {
    RunConfig c = load_run_config(fixture_dir() / "config.json");
    KnowledgeBase kb = load_kb(*c.kb_path, c.kb_kind);
    QuerySplit split = load_queries(*c.queries_path);
    ToolRegistry reg = standard_registry(c.tools_manifest, c.tool_options);
    return Fixture{std::move(c), std::move(kb), std::move(split), std::move(reg)};
  }();
  return f;
}

struct ScriptedGateway {
  std::shared_ptr<ScriptedBackend> backend;
  std::unique_ptr<Gateway> gateway;
};

inline ScriptedGateway scripted(std::vector<ScriptEntry> entries) {
  auto backend = std::make_shared<ScriptedBackend>(std::move(entries));
  return {backend, std::make_unique<Gateway>(backend, BackendKind::scripted)};
}

inline ScriptedGateway fixture_gateway() {
  auto backend = ScriptedBackend::from_file(fixture().config.backend.script_path);
  return {backend, std::make_unique<Gateway>(backend, BackendKind::scripted)};
}

inline std::string fenced(const std::string& plan) { return "```plan\n" + plan + "```\n"; }

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kbopt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Local chat-completion server. The handler sees the 0-based request index.
class MockChatServer {
 public:
  using Handler = std::function<void(int index, const httplib::Request&, httplib::Response&)>;

  explicit MockChatServer(Handler handler) : handler_(std::move(handler)) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int index;
      {
        std::lock_guard lock(mu_);
        index = static_cast<int>(arrivals_.size());
        arrivals_.push_back(std::chrono::steady_clock::now());
      }
      int now = ++in_flight_;
      int prev = max_in_flight_.load();
      while (now > prev && !max_in_flight_.compare_exchange_weak(prev, now)) {
      }
      handler_(index, req, res);
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockChatServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  int max_in_flight() const { return max_in_flight_.load(); }
  std::vector<std::chrono::steady_clock::time_point> arrivals() const {
    std::lock_guard lock(mu_);
    return arrivals_;
  }

  static void reply(httplib::Response& res, const std::string& content) {
    std::string body = R"({"choices":[{"message":{"role":"assistant","content":)" +
                       nlohmann::json(content).dump() + "}}]}";
    res.set_content(body, "application/json");
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<std::chrono::steady_clock::time_point> arrivals_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

inline BackendConfig http_config(const std::string& endpoint) {
  BackendConfig c;
  c.kind = BackendKind::http;
  c.endpoint = endpoint;
  c.model = "mock";
  c.auth_env = "KBOPT_TEST_NO_SUCH_KEY";
  c.retry.base_backoff = std::chrono::milliseconds(20);
  c.retry.jitter = 0.2;
  c.request_timeout = std::chrono::milliseconds(5000);
  return c;
}

}  // namespace kbopt::testing
