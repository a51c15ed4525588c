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

// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "kbopt/prompts.hpp"
#include "kbopt/text.hpp"
#include "plan_gen.hpp"
#include "support.hpp"

using namespace kbopt;
using nlohmann::json;

namespace {

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
  if (!cond) throw Failed(what);
}

using Clock = std::chrono::steady_clock;

// --- 1. metrics against a positional scan ----------------------------------

// Selection by repeated arg-max: a different algorithm from the library's sort.
IdList oracle_ranking(const ScoreMap& scores) {
  std::vector<std::pair<EntityId, double>> left(scores.begin(), scores.end());
  IdList out;
  while (!left.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < left.size(); ++i) {
      const auto& a = left[i];
      const auto& b = left[best];
      if (a.second > b.second || (a.second == b.second && a.first.value < b.first.value)) best = i;
    }
    out.push_back(left[best].first);
    left.erase(left.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

// 1-based position of id in the ranking, 0 when absent.
std::size_t position(const IdList& ranking, EntityId id) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i] == id) return i + 1;
  return 0;
}

void ac1() {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    ScoreMap scores;
    std::size_t n = 1 + rng() % 50;
    for (std::size_t i = 0; i < n; ++i) scores[EntityId{rng() % 80}] = static_cast<double>(rng() % 9) / 8.0;
    std::set<std::uint64_t> truth_set;
    for (std::size_t i = 0, t = 1 + rng() % 5; i < t; ++i) truth_set.insert(rng() % 80);
    IdList truth;
    for (auto t : truth_set) truth.push_back(EntityId{t});

    IdList lib = rank_from_scores(scores);
    IdList ora = oracle_ranking(scores);
    expect(lib == ora, "ranking differs in trial " + std::to_string(trial));

    std::size_t first = 0, in20 = 0;
    for (auto t : truth) {
      std::size_t p = position(ora, t);
      if (p && (!first || p < first)) first = p;
      if (p && p <= 20) ++in20;
    }
    double hit1 = first == 1 ? 1.0 : 0.0;
    double hit5 = first >= 1 && first <= 5 ? 1.0 : 0.0;
    double recall = static_cast<double>(in20) / static_cast<double>(truth.size());
    double rr = first ? 1.0 / static_cast<double>(first) : 0.0;
    expect(hit_at_k(lib, truth, 1) == hit1, "hit1");
    expect(hit_at_k(lib, truth, 5) == hit5, "hit5");
    expect(recall_at_k(lib, truth, 20) == recall, "recall20");
    expect(mrr(lib, truth) == rr, "mrr");
  }
}

// --- 2. partition and batches -----------------------------------------------

void ac2() {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<PoolEntry> records;
    for (std::int64_t i = 0, n = static_cast<std::int64_t>(rng() % 60); i < n; ++i)
      records.push_back({i, static_cast<double>(rng() % 11) / 10.0});
    std::uint64_t hi = 1 + rng() % 9, li = hi + rng() % (10 - hi);
    double h = static_cast<double>(hi) / 10.0, l = static_cast<double>(li) / 10.0;
    auto pools = partition_queries(records, l, h);
    expect(pools.positive.size() + pools.negative.size() + pools.excluded.size() == records.size(), "sizes");
    std::set<std::int64_t> pos, neg;
    for (const auto& e : pools.positive) expect(e.metric > l && pos.insert(e.query_id).second, "positive predicate");
    for (const auto& e : pools.negative) expect(e.metric < h && neg.insert(e.query_id).second, "negative predicate");
    for (const auto& e : pools.excluded) expect(!(e.metric > l) && !(e.metric < h), "excluded predicate");

    std::size_t b = 2 * (1 + rng() % 10);
    std::uint64_t seed = rng();
    std::mt19937_64 r1(seed), r2(seed);
    if (pools.positive.empty() || pools.negative.empty()) {
      bool threw = false;
      try {
        sample_contrast_batch(pools, b, r1);
      } catch (const InsufficientContrast&) {
        threw = true;
      }
      expect(threw, "empty pool must raise InsufficientContrast");
      continue;
    }
    auto x = sample_contrast_batch(pools, b, r1);
    auto y = sample_contrast_batch(pools, b, r2);
    expect(x.positives == y.positives && x.negatives == y.negatives, "seed determinism");
    std::size_t want = std::min({b / 2, pools.positive.size(), pools.negative.size()});
    expect(x.positives.size() == want && x.negatives.size() == want, "equal split");
    std::set<std::int64_t> seen;
    for (const auto& e : x.positives) expect(pos.count(e.query_id) && seen.insert(e.query_id).second, "pos pool");
    for (const auto& e : x.negatives) expect(neg.count(e.query_id) && seen.insert(e.query_id).second, "neg pool");
  }
}

// --- 3. memory bank -------------------------------------------------------

void ac3() {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    MemoryBank bank(5);
    std::vector<std::pair<double, int>> all;
    for (int i = 0, n = static_cast<int>(rng() % 101); i < n; ++i) {
      double perf = static_cast<double>(rng() % 8) / 7.0;
      bank.insert({std::to_string(i), "", perf, i, 0});
      all.push_back({perf, i});
      auto top = all;
      std::stable_sort(top.begin(), top.end(), [](auto a, auto b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
      });
      top.resize(std::min<std::size_t>(top.size(), 5));
      expect(bank.entries().size() == top.size(), "bank size");
      for (std::size_t j = 0; j < top.size(); ++j)
        expect(bank.entries()[j].plan_text == std::to_string(top[j].second), "bank order");
    }
  }
}

// --- 4. DSL round trip and sandbox ------------------------------------------

void ac4() {
  kbopt::testing::PlanGenerator gen(4);
  for (int i = 0; i < 100; ++i) {
    Plan p = gen.plan();
    expect(parse_plan(render_plan(p)) == p, "round trip of plan " + std::to_string(i));
  }

  KbSchema schema{{"product"}, {}, {"product"}, "tiny"};
  std::vector<Entity> ents;
  for (std::uint64_t i = 0; i < 4; ++i) ents.push_back({EntityId{i}, "product", "item " + std::to_string(i), 0, {}});
  KnowledgeBase kb(KbKind::relation_text, schema, ents, {});
  auto reg = standard_registry("stark", {true});
  reg.register_tool({"SleepTool", {{"ms", SemType::number}, {"ids", SemType::id_list}}, SemType::map,
                     "sleeps, then scores zero", CostClass::local, "", "", ""},
                    [](std::span<const Value> args, ToolContext&) -> Value {
                      std::this_thread::sleep_for(std::chrono::milliseconds(
                          static_cast<long long>(std::get<double>(args[0]))));
                      ScoreMap out;
                      for (auto id : std::get<IdList>(args[1])) out[id] = 0.0;
                      return out;
                    });
  Plan slow = parse_plan(
      "let a = TokenMatchScore(query, candidates)\n"
      "let b = SleepTool(200, candidates)\n"
      "let c = weighted_sum([a, b], [1, 1])\n"
      "return c\n");
  expect(validate_plan(slow, reg, kb.schema()).empty(), "sleep plan validates");
  ExecBudget budget;
  budget.wall_deadline = std::chrono::milliseconds(100);
  auto cands = kb.candidate_ids();
  bool timed_out = false;
  try {
    execute_plan(slow, "item", cands, kb, reg, nullptr, budget);
  } catch (const TimeoutError& e) {
    timed_out = e.statement() == 1 && e.reason() == TimeoutError::Reason::wall_clock;
  }
  expect(timed_out, "TimeoutError at statement 1");

  auto v = validate_plan(parse_plan("let x = LookupEverything(query, candidates)\nlet y = normalize(x)\nreturn y\n"),
                         reg, kb.schema());
  expect(v.size() == 1 && v[0].kind == ViolationKind::UnknownTool, "exactly one UnknownTool violation");
}

// --- 5. end-to-end improvement on the fixture ---------------------------------

void ac5() {
  const auto& f = kbopt::testing::fixture();
  auto manifest = json::parse(read_text_file(kbopt::testing::fixture_dir() / "fixture_manifest.json"));
  std::string traces[2];
  RunResult first;
  for (int k = 0; k < 2; ++k) {
    auto g = kbopt::testing::fixture_gateway();
    auto run = run_optimization(f.config.optimizer, f.kb, f.split, f.registry, *g.gateway,
                                [&](const TraceRecord& r) { traces[k] += trace_line(r) + "\n"; });
    if (k == 0) first = std::move(run);
  }
  expect(traces[0] == traces[1], "traces are byte-identical");
  expect(first.best_plan == parse_plan(kbopt::testing::kPlanV3), "v3 selected");
  expect(!first.trace.empty() && first.trace[0].ok, "iteration 0 succeeded");
  double gain = first.best_validation - first.trace[0].validation_metric;
  expect(first.best_validation == manifest["validation_hit1"]["v3"].get<double>(), "v3 validation hit1 matches oracle");
  expect(first.trace[0].validation_metric == manifest["validation_hit1"]["v1"].get<double>(),
         "v1 validation hit1 matches oracle");
  expect(gain >= manifest["required_gap"].get<double>(), "validation hit1 gain " + std::to_string(gain));
}

// --- 6. prompt goldens ----------------------------------------------------------

void ac6() {
  const auto& f = kbopt::testing::fixture();
  auto g = kbopt::testing::fixture_gateway();
  run_optimization(f.config.optimizer, f.kb, f.split, f.registry, *g.gateway);
  auto reqs = g.backend->requests();
  auto prompt = [&](const std::string& role, int it, int attempt) {
    for (const auto& r : reqs)
      if (r.role == role && r.iteration == it && r.attempt == attempt) return r.prompt;
    throw Failed("no " + role + " request for iteration " + std::to_string(it));
  };
  const std::pair<std::string, std::string> goldens[] = {
      {"actor_iteration0.txt", prompt("actor", 0, 0)},
      {"contrastor_iteration1.txt", prompt("contrastor", 1, 0)},
      {"actor_iteration2.txt", prompt("actor", 2, 0)},
      {"actor_iteration3_retry.txt", prompt("actor", 3, 1)},
  };
  const std::regex marker("<[a-z_]+>");
  for (const auto& [name, text] : goldens) {
    auto path = kbopt::testing::fixture_dir() / "golden" / name;
    expect(std::filesystem::exists(path), "missing golden " + name);
    expect(read_text_file(path) == text, "golden mismatch " + name);
    expect(!std::regex_search(text, marker), "residual placeholder in " + name);
  }
}

// --- 7. sweep harness -------------------------------------------------------

void ac7() {
  const auto& f = kbopt::testing::fixture();
  kbopt::testing::TempDir dir("acceptance_sweep");
  auto r = kbopt::testing::cli({"--config", (kbopt::testing::fixture_dir() / "config.json").string(), "--run-dir",
                                dir.path().string(), "sweep"});
  expect(r.code == kExitOk, "sweep exit code " + std::to_string(r.code) + ": " + r.err);
  std::istringstream csv(read_text_file(dir / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  expect(line == "l,h,hit1,best_iteration,failed", "sweep.csv header");
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    ++rows;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    expect(cols.size() == 5, "sweep.csv row shape");
    auto cfg = f.config.optimizer;
    cfg.upper_bound_l = std::stod(cols[0]);
    cfg.lower_bound_h = std::stod(cols[1]);
    auto g = kbopt::testing::fixture_gateway();
    auto run = run_optimization(cfg, f.kb, f.split, f.registry, *g.gateway);
    auto test = deploy(run.best_plan, f.split.test, f.kb, f.registry, g.gateway.get(), cfg);
    expect(cols[2] == text::format_number(test.primary), "cell " + cols[0] + "," + cols[1] + " value");
    expect(cols[3] == std::to_string(run.best_iteration), "cell " + cols[0] + "," + cols[1] + " best iteration");
    expect(cols[4] == "0", "cell failed");
  }
  expect(rows == 9, "9 sweep rows, got " + std::to_string(rows));
}

// --- 8. HTTP backend contract ----------------------------------------------------

void ac8() {
  using kbopt::testing::MockChatServer;
  CompletionRequest req;
  req.role = "actor";
  req.prompt = "hello";

  MockChatServer flaky([](int i, const httplib::Request&, httplib::Response& res) {
    if (i < 2) res.status = 429;
    else MockChatServer::reply(res, "fine");
  });
  auto config = kbopt::testing::http_config(flaky.endpoint());
  HttpBackend backend(config);
  auto c = backend.complete(req);
  expect(c.text == "fine" && c.attempts == 3, "429, 429, 200 succeeds on attempt 3");
  auto t = flaky.arrivals();
  expect(t.size() == 3, "three requests");
  for (int k = 0; k < 2; ++k) {
    double nominal = config.retry.nominal_delay(k).count();
    double gap = std::chrono::duration<double, std::milli>(t[k + 1] - t[k]).count();
    expect(gap >= nominal * (1.0 - config.retry.jitter) - 1.0 && gap <= nominal * (1.0 + config.retry.jitter) + 50.0,
           "backoff gap " + std::to_string(gap) + "ms outside jitter bounds");
  }

  MockChatServer denied([](int, const httplib::Request&, httplib::Response& res) { res.status = 401; });
  HttpBackend auth(kbopt::testing::http_config(denied.endpoint()));
  bool auth_failed = false;
  try {
    auth.complete(req);
  } catch (const GatewayError& e) {
    auth_failed = e.kind() == GatewayError::Kind::auth;
  }
  expect(auth_failed && denied.arrivals().size() == 1, "401 fails without retry");

  MockChatServer slow([](int, const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    MockChatServer::reply(res, "ok");
  });
  auto capped = kbopt::testing::http_config(slow.endpoint());
  capped.max_concurrency = 3;
  auto shared = std::make_shared<HttpBackend>(capped);
  std::vector<std::future<std::string>> calls;
  for (int i = 0; i < 12; ++i)
    calls.push_back(std::async(std::launch::async, [&] { return shared->complete(req).text; }));
  for (auto& f : calls) expect(f.get() == "ok", "capped call succeeds");
  expect(slow.arrivals().size() == 12, "all capped calls arrive");
  expect(slow.max_in_flight() <= 3, "in flight " + std::to_string(slow.max_in_flight()) + " > cap 3");
}

struct Criterion {
  int number;
  const char* name;
  void (*run)();
  double limit_s;  // 0: no runtime limit
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "metric oracle equivalence", ac1, 1.0},
      {2, "partition and batch properties", ac2, 1.0},
      {3, "memory bank property", ac3, 1.0},
      {4, "plan round trip and sandbox", ac4, 2.0},
      {5, "deterministic end-to-end improvement", ac5, 10.0},
      {6, "prompt fidelity", ac6, 0.0},
      {7, "sweep harness", ac7, 0.0},
      {8, "HTTP backend contract", ac8, 5.0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = true;
    auto t0 = Clock::now();
    try {
      c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (ok && c.limit_s > 0.0 && secs >= c.limit_s) {
      ok = false;
      detail = "took " + std::to_string(secs) + "s, limit " + std::to_string(c.limit_s) + "s";
    }
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << " AC" << c.number << " " << c.name << " (" << std::fixed
              << std::setprecision(3) << secs << "s)" << (detail.empty() ? "" : ": " + detail) << "\n";
  }
  return failures == 0 ? 0 : 1;
}
