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

#include <doctest.h>

#include <cstdio>
#include <sys/stat.h>
#include <sys/wait.h>

#include "kbopt/text.hpp"
#include "support.hpp"

using namespace kbopt;
using kbopt::testing::cli;
using kbopt::testing::fixture_dir;
using kbopt::testing::TempDir;
using nlohmann::json;

namespace {

std::string fixture_config() { return (fixture_dir() / "config.json").string(); }

json fixture_config_json() {
  auto j = json::parse(read_text_file(fixture_dir() / "config.json"));
  j["kb"] = (fixture_dir() / "kb.jsonl").string();
  j["queries"] = (fixture_dir() / "queries.jsonl").string();
  j["backend"]["script"] = (fixture_dir() / "script.jsonl").string();
  return j;
}

std::string write_config(const TempDir& dir, const json& j) {
  auto path = dir / "config.json";
  write_text_file(path, j.dump(2));
  return path.string();
}

std::string write_plan(const TempDir& dir, const std::string& name, const std::string& text) {
  auto path = dir / name;
  write_text_file(path, text);
  return path.string();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

// Runs the installed binary; returns its exit status.
int run_binary(const std::string& args) {
  int status = std::system((std::string(KBOPT_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("gen-kb writes a deterministic knowledge base") {
  TempDir a("gen_a"), b("gen_b");
  auto r1 = cli({"--seed", "1", "gen-kb", "--out", a.path().string()});
  REQUIRE(r1.code == kExitOk);
  CHECK(r1.out.find("wrote 60 entities") != std::string::npos);
  REQUIRE(cli({"--seed", "1", "gen-kb", "--out", b.path().string()}).code == kExitOk);
  CHECK(read_text_file(a / "kb.jsonl") == read_text_file(b / "kb.jsonl"));
  CHECK(read_text_file(a / "queries.jsonl") == read_text_file(b / "queries.jsonl"));
  CHECK(read_text_file(a / "kb.jsonl") == read_text_file(fixture_dir() / "kb.jsonl"));
  CHECK(lines_of(read_text_file(a / "kb.jsonl")).size() > 60);

  TempDir c("gen_c");
  REQUIRE(cli({"--seed", "2", "gen-kb", "--out", c.path().string()}).code == kExitOk);
  CHECK(read_text_file(a / "kb.jsonl") != read_text_file(c / "kb.jsonl"));
}

TEST_CASE("gen-kb into an unwritable location exits 1 naming the path") {
  TempDir d("gen_ro");
  write_text_file(d / "blocker", "a file, not a directory");
  auto target = (d / "blocker").string() + "/sub";
  auto r = cli({"gen-kb", "--out", target});
  CHECK(r.code == kExitIo);
  CHECK(r.err.find(target) != std::string::npos);
  CHECK(run_binary("gen-kb --out " + target) == kExitIo);
}

TEST_CASE("optimize persists a complete run") {
  TempDir d("opt");
  auto run = (d / "run").string();
  auto r = cli({"--config", fixture_config(), "--run-dir", run, "optimize"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(r.out.find("best plan from iteration 2") != std::string::npos);
  for (const char* f : {"config.json", "trace.jsonl", "memory.json", "best_plan.plan", "metrics_validation.csv",
                        "metrics_test.csv", "run_manifest.json"})
    CHECK_MESSAGE(std::filesystem::exists(std::filesystem::path(run) / f), f);
  CHECK(parse_plan(read_text_file(std::filesystem::path(run) / "best_plan.plan")) ==
        parse_plan(kbopt::testing::kPlanV3));
  auto trace = lines_of(read_text_file(std::filesystem::path(run) / "trace.jsonl"));
  CHECK(trace.size() == 4);
  for (std::size_t i = 0; i < trace.size(); ++i) CHECK(json::parse(trace[i])["iteration"] == i);

  auto manifest = json::parse(read_text_file(std::filesystem::path(run) / "run_manifest.json"));
  auto fnv = [](const std::filesystem::path& p) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(text::hash64(read_text_file(p), 0)));
    return std::string("fnv1a64:") + buf;
  };
  CHECK(manifest["kb_digest"] == fnv(fixture_dir() / "kb.jsonl"));
  CHECK(manifest["queries_digest"] == fnv(fixture_dir() / "queries.jsonl"));
  CHECK(manifest["script_digest"] == fnv(fixture_dir() / "script.jsonl"));
  CHECK(manifest["backend_kind"] == "scripted");

  // the persisted config reproduces the run
  auto again = (d / "again").string();
  REQUIRE(cli({"--config", (std::filesystem::path(run) / "config.json").string(), "--run-dir", again, "optimize"})
              .code == kExitOk);
  CHECK(read_text_file(std::filesystem::path(run) / "trace.jsonl") ==
        read_text_file(std::filesystem::path(again) / "trace.jsonl"));
}

TEST_CASE("optimize rejects bad thresholds before doing any work") {
  TempDir d("opt_bad");
  auto j = fixture_config_json();
  j["optimizer"]["lower_bound_h"] = 0.7;
  j["optimizer"]["upper_bound_l"] = 0.5;
  auto run = (d / "run").string();
  auto r = cli({"--config", write_config(d, j), "--run-dir", run, "optimize"});
  CHECK(r.code == kExitInvalid);
  CHECK(r.err.find("0 < h ≤ l < 1") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(run));

  auto unknown = fixture_config_json();
  unknown["optimizer"]["learning_rate"] = 3;
  CHECK(cli({"--config", write_config(d, unknown), "--run-dir", run, "optimize"}).code == kExitInvalid);
  CHECK(cli({"--config", (d / "missing.json").string(), "--run-dir", run, "optimize"}).code == kExitIo);
  CHECK(cli({"frobnicate"}).code == kExitInvalid);
}

TEST_CASE("optimize exits 3 when every iteration fails") {
  TempDir d("opt_fail");
  auto j = fixture_config_json();
  write_text_file(d / "script.jsonl", "{\"role\":\"actor\",\"iteration\":0,\"text\":\"no plan here\"}\n");
  j["backend"]["script"] = (d / "script.jsonl").string();
  j["optimizer"]["iterations"] = 2;
  j["optimizer"]["actor_retry_limit"] = 0;
  auto run = (d / "run").string();
  auto r = cli({"--config", write_config(d, j), "--run-dir", run, "optimize"});
  CHECK(r.code == kExitAllFailed);
  CHECK(lines_of(read_text_file(std::filesystem::path(run) / "trace.jsonl")).size() == 2);
  CHECK_FALSE(std::filesystem::exists(std::filesystem::path(run) / "best_plan.plan"));
}

TEST_CASE("evaluate scores a plan and rejects invalid ones") {
  TempDir d("eval");
  auto good = write_plan(d, "v2.plan", kbopt::testing::kPlanV2);
  auto r = cli({"--config", fixture_config(), "evaluate", "--plan", good, "--split", "validation"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  auto rows = lines_of(r.out);
  CHECK(rows.front() == "query_id,hit1,hit5,recall20,mrr,failed");
  CHECK(rows.size() == kbopt::testing::fixture().split.validation.size() + 2);
  auto manifest = json::parse(read_text_file(fixture_dir() / "fixture_manifest.json"));
  auto mean = rows.back();
  CHECK(mean.rfind("mean," + text::format_number(manifest["validation_hit1"]["v2"].get<double>()) + ",", 0) == 0);

  auto out_json = (d / "m.json").string();
  REQUIRE(cli({"--config", fixture_config(), "evaluate", "--plan", good, "--out", out_json}).code == kExitOk);
  auto j = json::parse(read_text_file(out_json));
  CHECK(j["means"]["hit1"].get<double>() == manifest["test_hit1"]["v2"].get<double>());
  auto out_csv = (d / "m.csv").string();
  REQUIRE(cli({"--config", fixture_config(), "evaluate", "--plan", good, "--split", "all", "--out", out_csv})
              .code == kExitOk);
  CHECK(lines_of(read_text_file(out_csv)).size() == 2 + 40 + 20 + 20);

  auto bad = write_plan(d, "bad.plan", "let x = LookupEverything(query, candidates)\nreturn x\n");
  auto e = cli({"--config", fixture_config(), "evaluate", "--plan", bad});
  CHECK(e.code == kExitInvalid);
  CHECK(e.err.find("UnknownTool") != std::string::npos);
  auto syntax = write_plan(d, "syntax.plan", "let = 3\n");
  CHECK(cli({"--config", fixture_config(), "evaluate", "--plan", syntax}).code == kExitInvalid);
  CHECK(cli({"--config", fixture_config(), "evaluate", "--plan", (d / "none.plan").string()}).code == kExitIo);
}

TEST_CASE("answer ranks a planted query's answer first") {
  TempDir d("answer");
  const auto& f = kbopt::testing::fixture();
  auto plan = write_plan(d, "v3.plan", kbopt::testing::kPlanV3);
  // pick a test query that v3 gets right
  auto manifest = json::parse(read_text_file(fixture_dir() / "fixture_manifest.json"));
  const auto& per_query = manifest["oracle"]["v3"]["test"]["hit1_per_query"];
  std::size_t i = 0;
  while (i < per_query.size() && per_query[i].get<double>() != 1.0) ++i;
  REQUIRE(i < per_query.size());
  const auto& q = f.split.test[i];
  auto r = cli({"--config", fixture_config(), "answer", "--plan", plan, "--query", q.text, "--top-k", "3"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  auto j = json::parse(r.out);
  CHECK(j["query"] == q.text);
  REQUIRE(j["results"].size() == 3);
  auto top = EntityId{j["results"][0]["id"].get<std::uint64_t>()};
  CHECK(std::find(q.answers.begin(), q.answers.end(), top) != q.answers.end());
  CHECK(j["results"][0]["rank"] == 1);
  CHECK(j["results"][0]["score"].get<double>() >= j["results"][1]["score"].get<double>());
}

TEST_CASE("report derives a monotone curve without touching the trace") {
  TempDir d("report");
  auto run = std::filesystem::path(d / "run");
  REQUIRE(cli({"--config", fixture_config(), "--run-dir", run.string(), "optimize"}).code == kExitOk);
  auto before = read_text_file(run / "trace.jsonl");
  auto r = cli({"--run-dir", run.string(), "report"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(read_text_file(run / "trace.jsonl") == before);
  CHECK(std::filesystem::exists(run / "report.md"));
  CHECK(r.out.find("best validation metric: 0.750 at iteration 2") != std::string::npos);
  auto curve = lines_of(read_text_file(run / "curve.csv"));
  REQUIRE(curve.size() == 5);
  CHECK(curve[0] == "iteration,status,validation,running_max");
  double prev = -1.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    auto running = std::stod(curve[i].substr(curve[i].rfind(',') + 1));
    CHECK(running >= prev);
    prev = running;
  }
  CHECK(cli({"--run-dir", (d / "nowhere").string(), "report"}).code == kExitIo);
}

TEST_CASE("sweep writes one row per grid cell") {
  TempDir d("sweep");
  auto run = std::filesystem::path(d / "run");
  auto r = cli({"--config", fixture_config(), "--run-dir", run.string(), "sweep"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  auto rows = lines_of(read_text_file(run / "sweep.csv"));
  REQUIRE(rows.size() == 10);
  CHECK(rows[0] == "l,h,hit1,best_iteration,failed");
  CHECK(lines_of(read_text_file(run / "sweep_table.csv")).size() == 4);
  auto manifest = json::parse(read_text_file(run / "run_manifest.json"));
  CHECK(manifest.contains("config_digest"));
  CHECK(manifest.contains("started_at"));

  auto bad = fixture_config_json();
  bad["sweep"]["h"] = {0.3, 0.8};
  auto e = cli({"--config", write_config(d, bad), "--run-dir", (d / "bad").string(), "sweep"});
  CHECK(e.code == kExitInvalid);
  CHECK(e.err.find("0 < h ≤ l < 1") != std::string::npos);
}

TEST_CASE("the binary agrees with the in-process entry point") {
  TempDir d("binary");
  CHECK(run_binary("--config " + fixture_config() + " --run-dir " + (d / "run").string() + " optimize") == kExitOk);
  CHECK(run_binary("--help") == kExitOk);
  CHECK(run_binary("") == kExitInvalid);
}
