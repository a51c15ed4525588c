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

#include "kbopt/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kbopt/config.hpp"
#include "kbopt/io.hpp"
#include "kbopt/text.hpp"

namespace kbopt {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Globals {
  std::string config;
  std::string backend;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  std::optional<std::size_t> parallelism;
  std::string kb;
  std::string queries;
};

std::string digest(const std::string& bytes) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << text::hash64(bytes, 0);
  return "fnv1a64:" + ss.str();
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunConfig config_for(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_run_config(g.config);
  if (!g.backend.empty()) c.backend.kind = backend_kind_from_string(g.backend);
  if (g.seed) c.optimizer.seed = *g.seed;
  if (g.parallelism) c.optimizer.parallelism = *g.parallelism;
  if (!g.kb.empty()) c.kb_path = g.kb;
  if (!g.queries.empty()) c.queries_path = g.queries;
  return c;
}

KnowledgeBase kb_for(const RunConfig& c) {
  if (!c.kb_path) throw ConfigError("no knowledge base given (use --kb or the config key 'kb')");
  return load_kb(*c.kb_path, c.kb_kind);
}

QuerySplit queries_for(const RunConfig& c, const KnowledgeBase& kb) {
  if (!c.queries_path) throw ConfigError("no queries given (use --queries or the config key 'queries')");
  QuerySplit split = load_queries(*c.queries_path);
  validate_queries(kb, split);
  return split;
}

// No gateway when nothing is configured: LLM tools then fail per query.
std::unique_ptr<Gateway> gateway_for(const RunConfig& c, bool required) {
  bool configured = c.backend.kind == BackendKind::http || !c.backend.script_path.empty();
  if (!configured && !required) return nullptr;
  c.backend.validate();
  return make_gateway(c.backend);
}

Plan load_valid_plan(const std::string& path, const ToolRegistry& registry, const KbSchema& schema,
                     std::ostream& err) {
  Plan plan = parse_plan(read_text_file(path));
  auto violations = validate_plan(plan, registry, schema);
  if (!violations.empty()) {
    for (const auto& v : violations) err << to_string(v) << "\n";
    throw ConfigError("plan " + path + " has " + std::to_string(violations.size()) + " violation(s)");
  }
  return plan;
}

void write_manifest(const fs::path& dir, const RunConfig& c, const std::string& started) {
  ordered_json m;
  m["version"] = kVersion;
  m["config_digest"] = digest(run_config_json(c));
  if (c.kb_path) m["kb_digest"] = digest(read_text_file(*c.kb_path));
  if (c.queries_path) m["queries_digest"] = digest(read_text_file(*c.queries_path));
  if (!c.backend.script_path.empty()) m["script_digest"] = digest(read_text_file(c.backend.script_path));
  m["registry_manifest"] = c.tools_manifest;
  m["backend_kind"] = to_string(c.backend.kind);
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  write_text_file(dir / "run_manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct GenKbArgs {
  std::string out_dir;
  std::string kind = "relation_text";
  SynthParams params;
};

int cmd_gen_kb(const Globals& g, GenKbArgs a, std::ostream& out) {
  a.params.kind = kb_kind_from_string(a.kind);
  auto synth = generate_synthetic_kb(g.seed.value_or(1), a.params);
  fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_kb(synth.kb, dir / "kb.jsonl");
  save_queries(synth.split, dir / "queries.jsonl");
  out << "wrote " << synth.kb.entities().size() << " entities, " << synth.kb.relations().size()
      << " relations and " << synth.split.train.size() << "/" << synth.split.validation.size() << "/"
      << synth.split.test.size() << " train/validation/test queries to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_optimize(const Globals& g, std::ostream& out, std::ostream& err) {
  std::string started = utc_now();
  if (g.run_dir.empty()) throw ConfigError("optimize needs --run-dir");
  RunConfig c = config_for(g);
  c.optimizer.validate();
  KnowledgeBase kb = kb_for(c);
  QuerySplit split = queries_for(c, kb);
  ToolRegistry registry = standard_registry(c.tools_manifest, c.tool_options);
  auto gateway = gateway_for(c, true);

  fs::path dir(g.run_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "config.json", run_config_json(c));
  std::ofstream trace(dir / "trace.jsonl", std::ios::binary | std::ios::trunc);
  if (!trace) throw IoError("cannot write " + (dir / "trace.jsonl").string());

  auto run = run_optimization(c.optimizer, kb, split, registry, *gateway, [&](const TraceRecord& r) {
    trace << trace_line(r) << "\n";
    trace.flush();
  });
  trace.close();
  write_text_file(dir / "memory.json", memory_json(run.memory));
  for (const auto& r : run.trace)
    if (!r.ok) err << "iteration " << r.iteration << " failed: " << r.failure << "\n";
  if (!run.any_succeeded) {
    write_manifest(dir, c, started);
    err << "every iteration failed\n";
    return kExitAllFailed;
  }
  write_text_file(dir / "best_plan.plan", render_plan(run.best_plan));
  write_text_file(dir / "metrics_validation.csv", summary_csv(run.best_validation_summary));
  auto test = deploy(run.best_plan, split.test, kb, registry, gateway.get(), c.optimizer);
  write_text_file(dir / "metrics_test.csv", summary_csv(test));
  write_manifest(dir, c, started);
  const auto metric = to_string(c.optimizer.primary_metric);
  out << "best plan from iteration " << run.best_iteration << ": validation " << metric << " "
      << text::format_fixed3(run.best_validation) << ", test " << metric << " "
      << text::format_fixed3(test.primary) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string plan;
  std::string split = "test";
  std::string out;
};

int cmd_evaluate(const Globals& g, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig c = config_for(g);
  KnowledgeBase kb = kb_for(c);
  QuerySplit split = queries_for(c, kb);
  ToolRegistry registry = standard_registry(c.tools_manifest, c.tool_options);
  Plan plan = load_valid_plan(a.plan, registry, kb.schema(), err);
  auto gateway = gateway_for(c, false);

  std::vector<LabeledQuery> queries;
  if (a.split == "all") {
    for (const auto* part : {&split.train, &split.validation, &split.test})
      queries.insert(queries.end(), part->begin(), part->end());
  } else {
    queries = split_by_name(split, a.split);
  }
  auto summary = deploy(plan, queries, kb, registry, gateway.get(), c.optimizer);
  if (a.out.empty()) {
    out << summary_csv(summary);
  } else {
    write_text_file(a.out, a.out.ends_with(".json") ? summary_json(summary) : summary_csv(summary));
    out << a.split << ": " << summary.count << " queries, hit1 " << text::format_fixed3(summary.hit1)
        << ", hit5 " << text::format_fixed3(summary.hit5) << ", recall20 "
        << text::format_fixed3(summary.recall20) << ", mrr " << text::format_fixed3(summary.mrr) << "\n";
  }
  return kExitOk;
}

struct AnswerArgs {
  std::string plan;
  std::string query;
  std::size_t top_k = 5;
};

int cmd_answer(const Globals& g, const AnswerArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig c = config_for(g);
  KnowledgeBase kb = kb_for(c);
  ToolRegistry registry = standard_registry(c.tools_manifest, c.tool_options);
  Plan plan = load_valid_plan(a.plan, registry, kb.schema(), err);
  auto gateway = gateway_for(c, false);
  IdList candidates = select_candidates(a.query, kb, c.optimizer.candidates);
  ScoreMap scores = execute_plan(plan, a.query, candidates, kb, registry, gateway.get(), c.optimizer.budget);
  IdList ranked = rank_from_scores(scores);
  ordered_json results = ordered_json::array();
  for (std::size_t i = 0; i < ranked.size() && i < a.top_k; ++i) {
    const Entity& e = kb.at(ranked[i]);
    results.push_back({{"rank", i + 1},
                       {"id", e.id.value},
                       {"type", e.type},
                       {"score", scores.at(e.id)},
                       {"document", e.document}});
  }
  out << ordered_json{{"query", a.query}, {"results", results}}.dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const Globals& g, std::ostream& out) {
  if (g.run_dir.empty()) throw ConfigError("report needs --run-dir");
  fs::path dir(g.run_dir);
  std::istringstream lines(read_text_file(dir / "trace.jsonl"));
  std::string line, curve = "iteration,status,validation,running_max\n", table;
  std::optional<double> best;
  int best_iteration = -1, n = 0, failed = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    json r;
    try {
      r = json::parse(line);
    } catch (const json::parse_error&) {
      throw ConfigError("trace line " + std::to_string(n + 1) + " is not valid JSON");
    }
    ++n;
    int it = r.at("iteration").get<int>();
    bool ok = r.at("status") == "ok";
    std::string val;
    if (ok) {
      double v = r.at("validation_metric").get<double>();
      val = text::format_number(v);
      if (!best || v > *best) {
        best = v;
        best_iteration = it;
      }
    } else {
      ++failed;
    }
    curve += std::to_string(it) + "," + (ok ? "ok" : "failed") + "," + val + "," +
             (best ? text::format_number(*best) : std::string()) + "\n";
    table += "| " + std::to_string(it) + " | " + (ok ? "ok" : "failed") + " | " +
             (ok ? text::format_fixed3(r.at("validation_metric").get<double>()) : std::string("-")) + " | " +
             (best ? text::format_fixed3(*best) : std::string("-")) + " | " + r.value("feedback", "") + " |\n";
  }
  std::string md = "# Optimization report\n\n";
  md += "- run directory: " + dir.string() + "\n";
  md += "- iterations: " + std::to_string(n) + " (" + std::to_string(failed) + " failed)\n";
  if (best) md += "- best validation metric: " + text::format_fixed3(*best) + " at iteration " + std::to_string(best_iteration) + "\n";
  md += "\n| iteration | status | validation | running max | feedback |\n|---|---|---|---|---|\n" + table;
  if (fs::exists(dir / "best_plan.plan"))
    md += "\n## Best plan\n\n```plan\n" + read_text_file(dir / "best_plan.plan") + "```\n";
  if (fs::exists(dir / "metrics_test.csv"))
    md += "\n## Test metrics\n\n```\n" + read_text_file(dir / "metrics_test.csv") + "```\n";
  write_text_file(dir / "curve.csv", curve);
  write_text_file(dir / "report.md", md);
  out << md;
  return kExitOk;
}

int cmd_sweep(const Globals& g, std::ostream& out) {
  std::string started = utc_now();
  if (g.run_dir.empty()) throw ConfigError("sweep needs --run-dir");
  RunConfig c = config_for(g);
  c.optimizer.validate();
  for (double l : c.sweep_l)
    for (double h : c.sweep_h)
      if (!(h > 0.0 && h <= l && l < 1.0))
        throw ConfigError("sweep cell l=" + text::format_number(l) + ", h=" + text::format_number(h) +
                          " violates 0 < h ≤ l < 1");
  KnowledgeBase kb = kb_for(c);
  QuerySplit split = queries_for(c, kb);
  ToolRegistry registry = standard_registry(c.tools_manifest, c.tool_options);
  c.backend.validate();
  auto cells = sweep_thresholds(c.optimizer, c.sweep_l, c.sweep_h, kb, split, registry,
                                [&] { return make_gateway(c.backend); });
  fs::path dir(g.run_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "sweep.csv", sweep_csv(cells, c.optimizer.primary_metric));
  std::string table = sweep_table_csv(cells, c.optimizer.primary_metric);
  write_text_file(dir / "sweep_table.csv", table);
  write_manifest(dir, c, started);
  out << table;
  bool all_failed = std::all_of(cells.begin(), cells.end(), [](const SweepCell& s) { return s.failed; });
  return all_failed ? kExitAllFailed : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimize knowledge-base retrieval plans with contrastive feedback", "kbopt"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--backend", g.backend, "completion backend")->check(CLI::IsMember({"scripted", "http"}));
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--run-dir", g.run_dir, "run directory");
  app.add_option("--parallelism", g.parallelism, "concurrent query evaluations")->check(CLI::PositiveNumber);
  app.add_option("--kb", g.kb, "knowledge base (JSONL)");
  app.add_option("--queries", g.queries, "labelled queries (JSONL)");

  GenKbArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-kb", "generate a synthetic knowledge base with planted queries");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--kind", gen.kind, "relation_text or image_text")
      ->check(CLI::IsMember({"relation_text", "image_text"}));
  gen_cmd->add_option("--entities", gen.params.n_entities, "number of entities");
  gen_cmd->add_option("--types", gen.params.n_types, "number of entity types");
  gen_cmd->add_option("--extra-edges", gen.params.n_extra_edges, "random edges beyond the planted ones");
  gen_cmd->add_option("--train", gen.params.n_train, "training queries");
  gen_cmd->add_option("--validation", gen.params.n_validation, "validation queries");
  gen_cmd->add_option("--test", gen.params.n_test, "test queries");
  gen_cmd->add_option("--max-answers", gen.params.max_answers, "answers per query at most");

  auto* opt_cmd = app.add_subcommand("optimize", "run the optimization loop and persist the run");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a plan on a query split");
  eval_cmd->add_option("--plan", ev.plan, "plan file")->required();
  eval_cmd->add_option("--split", ev.split, "train, validation, test or all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  eval_cmd->add_option("--out", ev.out, "metrics file (.csv or .json)");

  AnswerArgs ans;
  auto* ans_cmd = app.add_subcommand("answer", "rank entities for one query");
  ans_cmd->add_option("--plan", ans.plan, "plan file")->required();
  ans_cmd->add_option("--query", ans.query, "query text")->required();
  ans_cmd->add_option("--top-k", ans.top_k, "results to print")->check(CLI::PositiveNumber);

  auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
  auto* sweep_cmd = app.add_subcommand("sweep", "optimize and deploy over an l x h threshold grid");

  std::vector<std::string> argv_store{"kbopt"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*gen_cmd) return cmd_gen_kb(g, gen, out);
    if (*opt_cmd) return cmd_optimize(g, out, err);
    if (*eval_cmd) return cmd_evaluate(g, ev, out, err);
    if (*ans_cmd) return cmd_answer(g, ans, out, err);
    if (*report_cmd) return cmd_report(g, out);
    if (*sweep_cmd) return cmd_sweep(g, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitInvalid;
}

}  // namespace kbopt
