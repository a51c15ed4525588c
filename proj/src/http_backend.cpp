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
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "kbopt/gateway.hpp"

namespace kbopt {

using nlohmann::json;

struct HttpBackend::Limiter {
  explicit Limiter(int n) : slots(n) {}
  std::counting_semaphore<4096> slots;
};

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<4096>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<4096>& s_;
};

}  // namespace

HttpBackend::HttpBackend(BackendConfig config)
    : config_(std::move(config)),
      limiter_(std::make_unique<Limiter>(config_.max_concurrency)),
      rng_state_(config_.retry.jitter_seed ^ 0x9e3779b97f4a7c15ULL) {}

HttpBackend::~HttpBackend() = default;

double HttpBackend::next_jitter_factor() {
  std::uint64_t z;
  {
    std::lock_guard lock(rng_mu_);
    z = (rng_state_ += 0x9e3779b97f4a7c15ULL);
  }
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  double u = static_cast<double>(z >> 11) * 0x1.0p-53;  // [0, 1)
  return 1.0 + config_.retry.jitter * (2.0 * u - 1.0);
}

std::string HttpBackend::post_json(const std::string& url, const std::string& body, int* attempts) {
  auto [base, path] = split_url(url);
  httplib::Headers headers;
  if (!config_.auth_env.empty()) {
    if (const char* key = std::getenv(config_.auth_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto timeout = config_.request_timeout;
  GatewayError::Kind last_kind = GatewayError::Kind::transport;
  std::string last_message;
  for (int attempt = 0; attempt < config_.retry.max_attempts; ++attempt) {
    if (attempts) *attempts = attempt + 1;
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      SlotGuard slot(limiter_->slots);
      httplib::Client cli(base);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                 static_cast<time_t>((timeout.count() % 1000) * 1000));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                           static_cast<time_t>((timeout.count() % 1000) * 1000));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                            static_cast<time_t>((timeout.count() % 1000) * 1000));
      res = cli.Post(path, headers, body, "application/json");
    }

    if (!res) {
      last_kind = GatewayError::Kind::transport;
      last_message = "request to " + url + " failed: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      return res->body;
    } else if (res->status == 401 || res->status == 403) {
      throw GatewayError(GatewayError::Kind::auth,
                         "endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
    } else if (res->status == 429) {
      last_kind = GatewayError::Kind::rate_limited;
      last_message = "HTTP 429 after " + std::to_string(attempt + 1) + " attempt(s)";
    } else if (res->status >= 500) {
      last_kind = GatewayError::Kind::transport;
      last_message = "HTTP " + std::to_string(res->status) + " after " +
                     std::to_string(attempt + 1) + " attempt(s)";
    } else {
      throw GatewayError(GatewayError::Kind::transport,
                         "HTTP " + std::to_string(res->status) + ": " + res->body);
    }

    if (attempt + 1 < config_.retry.max_attempts) {
      auto delay = config_.retry.nominal_delay(attempt) * next_jitter_factor();
      std::this_thread::sleep_for(delay);
    }
  }
  throw GatewayError(last_kind, last_message);
}

Completion HttpBackend::complete(const CompletionRequest& request) {
  json body = {{"model", config_.model},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
               {"temperature", request.temperature.value_or(0.0)},
               {"max_tokens", request.max_output_tokens}};
  int attempts = 0;
  auto reply = post_json(config_.endpoint, body.dump(), &attempts);
  try {
    auto parsed = json::parse(reply);
    const auto& content = parsed.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw GatewayError(GatewayError::Kind::malformed, "content is not a string");
    return Completion{content.get<std::string>(), attempts};
  } catch (const json::exception& e) {
    throw GatewayError(GatewayError::Kind::malformed,
                       std::string("reply lacks choices[0].message.content: ") + e.what());
  }
}

}  // namespace kbopt
