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

#include "kbopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "kbopt/text.hpp"

namespace kbopt {

using nlohmann::ordered_json;

void OptimizerConfig::validate() const {
  if (!(lower_bound_h > 0.0 && lower_bound_h <= upper_bound_l && upper_bound_l < 1.0))
    throw ConfigError("thresholds must satisfy 0 < h ≤ l < 1 (got h=" + text::format_number(lower_bound_h) +
                      ", l=" + text::format_number(upper_bound_l) + ")");
  if (batch_size < 2 || batch_size % 2 != 0)
    throw ConfigError("batch_size must be even and at least 2 (got " + std::to_string(batch_size) + ")");
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (memory_top_k < 1) throw ConfigError("memory_top_k must be at least 1");
  if (actor_retry_limit < 0) throw ConfigError("actor_retry_limit must be non-negative");
  if (budget.wall_deadline.count() <= 0) throw ConfigError("budget.wall_deadline_ms must be positive");
  if (budget.max_statements == 0) throw ConfigError("budget.max_statements must be positive");
  if (budget.max_llm_calls && *budget.max_llm_calls == 0)
    throw ConfigError("budget.max_llm_calls must be positive");
  if (candidates.n == 0) throw ConfigError("candidate_policy.n must be positive");
  if (parallelism == 0) throw ConfigError("parallelism must be positive");
  if (n_example_queries == 0) throw ConfigError("n_example_queries must be positive");
}

QueryPools partition_queries(std::span<const PoolEntry> records, double l, double h, bool inclusive) {
  QueryPools pools;
  for (const auto& r : records) {
    bool pos = inclusive ? r.metric >= l : r.metric > l;
    bool neg = inclusive ? r.metric <= h : r.metric < h;
    if (pos) pools.positive.push_back(r);
    else if (neg) pools.negative.push_back(r);
    else pools.excluded.push_back(r);
  }
  return pools;
}

InsufficientContrast::InsufficientContrast(std::size_t positives, std::size_t negatives)
    : Error("cannot form a contrast batch from " + std::to_string(positives) + " positive and " +
            std::to_string(negatives) + " negative queries") {}

namespace {

// Partial Fisher-Yates; `rng() % n` keeps draws identical across standard libraries.
std::vector<PoolEntry> draw(const std::vector<PoolEntry>& pool, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<PoolEntry> out;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

}  // namespace

ContrastBatch sample_contrast_batch(const QueryPools& pools, std::size_t b, std::mt19937_64& rng) {
  if (pools.positive.empty() || pools.negative.empty())
    throw InsufficientContrast(pools.positive.size(), pools.negative.size());
  std::size_t k = std::min({b / 2, pools.positive.size(), pools.negative.size()});
  ContrastBatch batch;
  batch.shrunk = k < b / 2;
  batch.positives = draw(pools.positive, k, rng);
  batch.negatives = draw(pools.negative, k, rng);
  return batch;
}

MemoryBank::MemoryBank(std::size_t capacity) : capacity_(capacity) {}

void MemoryBank::insert(MemoryEntry entry) {
  entry.sequence = next_sequence_++;
  entries_.push_back(std::move(entry));
  std::sort(entries_.begin(), entries_.end(), [](const MemoryEntry& a, const MemoryEntry& b) {
    if (a.performance != b.performance) return a.performance > b.performance;
    return a.sequence > b.sequence;
  });
  if (entries_.size() > capacity_) entries_.resize(capacity_);
}

std::vector<MemoryExcerpt> MemoryBank::excerpts() const {
  std::vector<MemoryExcerpt> out;
  for (const auto& e : entries_) out.push_back({e.plan_text, e.performance, e.iteration});
  return out;
}

std::string comparator_step(const std::vector<QueryMetric>& positives,
                            const std::vector<QueryMetric>& negatives, const Plan& current,
                            const std::string& initial_prompt, const std::string& metric_name,
                            Gateway& gateway, int iteration) {
  CompletionRequest req;
  req.role = "contrastor";
  req.prompt = render_contrastor_prompt(initial_prompt, current, positives, negatives, metric_name);
  req.iteration = iteration;
  return gateway.complete(req).text;
}

ActorFailed::ActorFailed(int attempts, std::vector<std::string> errors)
    : Error([&] {
        std::string m = "no valid plan after " + std::to_string(attempts) + " attempt(s)";
        for (const auto& e : errors) m += "; " + e;
        return m;
      }()),
      errors_(std::move(errors)) {}

ActorResult actor_step(const std::string& prompt, Gateway& gateway, const ToolRegistry& registry,
                       const KbSchema& schema, int retry_limit, int iteration) {
  ActorResult result;
  std::vector<std::string> errors;
  for (int attempt = 0; attempt <= retry_limit; ++attempt) {
    CompletionRequest req;
    req.role = "actor";
    req.prompt = attempt == 0 ? prompt : append_errors(prompt, errors);
    req.iteration = iteration;
    req.attempt = attempt;
    std::string reply = gateway.complete(req).text;
    errors.clear();
    try {
      Plan plan = parse_plan(extract_plan(reply));
      for (const auto& v : validate_plan(plan, registry, schema)) errors.push_back(to_string(v));
      if (errors.empty()) {
        result.plan = std::move(plan);
        result.attempts.push_back({attempt, {}});
        return result;
      }
    } catch (const NoPlanBlock& e) {
      errors.push_back(e.what());
    } catch (const MultiplePlanBlocks& e) {
      errors.push_back(e.what());
    } catch (const PlanSyntaxError& e) {
      errors.push_back(e.what());
    }
    result.attempts.push_back({attempt, errors});
  }
  throw ActorFailed(retry_limit + 1, errors);
}

std::string trace_line(const TraceRecord& r) {
  ordered_json j;
  j["iteration"] = r.iteration;
  j["status"] = r.ok ? "ok" : "failed";
  if (!r.ok) j["failure"] = r.failure;
  j["feedback"] = r.feedback;
  j["effective_h"] = r.effective_h;
  j["pools"] = {{"positive", r.n_positive}, {"negative", r.n_negative}, {"excluded", r.n_excluded}};
  j["batch"] = {{"positive", r.batch_positive}, {"negative", r.batch_negative}, {"shrunk", r.batch_shrunk}};
  j["instruction"] = r.instruction;
  j["attempts"] = ordered_json::array();
  for (const auto& a : r.attempts) j["attempts"].push_back({{"attempt", a.attempt}, {"errors", a.errors}});
  j["plan"] = r.plan;
  j["train_metric"] = r.train_metric;
  j["batch_metric"] = r.batch_metric;
  j["validation_metric"] = r.validation_metric;
  j["validation_failed"] = r.validation_failed;
  return j.dump();
}

namespace {

EvalOptions eval_options(const OptimizerConfig& c) {
  EvalOptions o;
  o.budget = c.budget;
  o.candidates = c.candidates;
  o.primary = c.primary_metric;
  o.parallelism = c.parallelism;
  return o;
}

std::vector<std::string> timeout_feedback(const EvalSummary& s, const char* where) {
  std::size_t n = 0;
  std::string example;
  for (const auto& r : s.records) {
    if (r.failure != "timeout") continue;
    if (n++ == 0) example = r.error;
  }
  if (n == 0) return {};
  return {"TimeoutError on " + std::to_string(n) + " " + where + " queries (" + example +
          "). Make the plan cheaper, e.g. drop redundant steps and avoid LLM calls over every candidate."};
}

class Loop {
 public:
  Loop(const OptimizerConfig& config, const KnowledgeBase& kb, const QuerySplit& split,
       const ToolRegistry& registry, Gateway& gateway, const TraceSink& sink)
      : cfg_(config),
        kb_(kb),
        split_(split),
        registry_(registry),
        gateway_(gateway),
        sink_(sink),
        opts_(eval_options(config)),
        rng_(config.seed) {
    result_.memory = MemoryBank(config.memory_top_k);
    for (const auto& q : split.train) train_by_id_[q.query_id] = &q;
  }

  RunResult run() {
    cfg_.validate();
    if (split_.train.empty()) throw ConfigError("optimization needs training queries");
    if (split_.validation.empty()) throw ConfigError("optimization needs validation queries");
    initial_prompt_ = initial_prompt();
    int rounds = std::max(cfg_.iterations, 1);
    for (int t = 0; t < rounds; ++t) {
      TraceRecord rec;
      rec.iteration = t;
      rec.effective_h = cfg_.lower_bound_h;
      try {
        if (!current_) cold_start(rec);
        else improve(rec);
        result_.any_succeeded = true;
      } catch (const InsufficientContrast& e) {
        fail(rec, "InsufficientContrast", e.what());
      } catch (const ActorFailed& e) {
        fail(rec, "ActorFailed", e.what());
      } catch (const GatewayError& e) {
        fail(rec, to_string(e.kind()), e.what());
      }
      if (sink_) sink_(rec);
      result_.trace.push_back(std::move(rec));
    }
    return std::move(result_);
  }

 private:
  std::string initial_prompt() const {
    std::vector<std::string> examples;
    for (std::size_t i = 0; i < split_.train.size() && i < cfg_.n_example_queries; ++i)
      examples.push_back(split_.train[i].text);
    std::size_t n = kb_.candidate_ids().size();
    if (cfg_.candidates.kind == CandidatePolicy::Kind::top_n) n = std::min(n, cfg_.candidates.n);
    return render_actor_prompt(kb_.schema(), registry_, examples, n, kb_.schema().candidate_types);
  }

  void fail(TraceRecord& rec, const std::string& kind, const std::string& what) {
    rec.ok = false;
    rec.failure = kind + ": " + what;
    if (rec.feedback.empty()) rec.feedback = "ok";
  }

  std::string with_feedback(std::string prompt) {
    if (!pending_.empty()) prompt = append_errors(prompt, pending_);
    pending_.clear();
    return prompt;
  }

  // Validation scoring and best-plan selection, shared by every successful round.
  void adopt(TraceRecord& rec, ActorResult&& actor) {
    rec.attempts = actor.attempts;
    rec.plan = render_plan(actor.plan);
    auto val = evaluate_plan(actor.plan, split_.validation, kb_, registry_, &gateway_, opts_);
    rec.validation_metric = val.primary;
    rec.validation_failed = val.failed;
    auto timeouts = timeout_feedback(val, "validation");
    pending_.insert(pending_.end(), timeouts.begin(), timeouts.end());
    rec.feedback = !timeouts.empty() ? "timeout" : actor.attempts.size() > 1 ? "validity" : "ok";
    if (result_.best_iteration < 0 || val.primary > result_.best_validation) {
      result_.best_plan = actor.plan;
      result_.best_iteration = rec.iteration;
      result_.best_validation = val.primary;
      result_.best_validation_summary = val;
    }
    current_ = std::move(actor.plan);
  }

  void cold_start(TraceRecord& rec) {
    auto actor = actor_step(with_feedback(initial_prompt_), gateway_, registry_, kb_.schema(),
                            cfg_.actor_retry_limit, rec.iteration);
    adopt(rec, std::move(actor));
  }

  void improve(TraceRecord& rec) {
    auto train = evaluate_plan(*current_, split_.train, kb_, registry_, &gateway_, opts_);
    rec.train_metric = train.primary;
    auto timeouts = timeout_feedback(train, "training");
    pending_.insert(pending_.end(), timeouts.begin(), timeouts.end());

    std::vector<PoolEntry> entries;
    for (const auto& r : train.records) entries.push_back({r.query_id, r.primary});
    double h = cfg_.lower_bound_h;
    QueryPools pools = partition_queries(entries, cfg_.upper_bound_l, h, cfg_.inclusive_bounds);
    // widen the negative band in +0.05 steps, never past l
    while (cfg_.adaptive_negative_bound && pools.negative.empty() && !pools.positive.empty() &&
           h + 0.05 <= cfg_.upper_bound_l + 1e-12) {
      h = std::min(h + 0.05, cfg_.upper_bound_l);
      pools = partition_queries(entries, cfg_.upper_bound_l, h, cfg_.inclusive_bounds);
    }
    rec.effective_h = h;
    rec.n_positive = pools.positive.size();
    rec.n_negative = pools.negative.size();
    rec.n_excluded = pools.excluded.size();

    ContrastBatch batch = sample_contrast_batch(pools, cfg_.batch_size, rng_);
    rec.batch_shrunk = batch.shrunk;
    std::vector<QueryMetric> pos, neg;
    std::vector<LabeledQuery> batch_queries;
    for (const auto& p : batch.positives) {
      rec.batch_positive.push_back(p.query_id);
      pos.push_back({train_by_id_.at(p.query_id)->text, p.metric});
      batch_queries.push_back(*train_by_id_.at(p.query_id));
    }
    for (const auto& n : batch.negatives) {
      rec.batch_negative.push_back(n.query_id);
      neg.push_back({train_by_id_.at(n.query_id)->text, n.metric});
      batch_queries.push_back(*train_by_id_.at(n.query_id));
    }

    rec.instruction = comparator_step(pos, neg, *current_, initial_prompt_,
                                      to_string(cfg_.primary_metric), gateway_, rec.iteration);
    std::string prompt = render_actor_followup(initial_prompt_, result_.memory.excerpts(),
                                               render_plan(*current_), rec.instruction);
    auto actor = actor_step(with_feedback(prompt), gateway_, registry_, kb_.schema(),
                            cfg_.actor_retry_limit, rec.iteration);

    auto on_batch = evaluate_plan(actor.plan, batch_queries, kb_, registry_, &gateway_, opts_);
    rec.batch_metric = on_batch.primary;
    std::string plan_text = render_plan(actor.plan);
    std::string instruction = rec.instruction;
    adopt(rec, std::move(actor));
    result_.memory.insert({plan_text, instruction, on_batch.primary, rec.iteration, 0});
  }

  OptimizerConfig cfg_;
  const KnowledgeBase& kb_;
  const QuerySplit& split_;
  const ToolRegistry& registry_;
  Gateway& gateway_;
  const TraceSink& sink_;
  EvalOptions opts_;
  std::mt19937_64 rng_;
  std::map<std::int64_t, const LabeledQuery*> train_by_id_;
  std::string initial_prompt_;
  std::optional<Plan> current_;
  std::vector<std::string> pending_;
  RunResult result_;
};

}  // namespace

RunResult run_optimization(const OptimizerConfig& config, const KnowledgeBase& kb,
                           const QuerySplit& split, const ToolRegistry& registry, Gateway& gateway,
                           const TraceSink& sink) {
  return Loop(config, kb, split, registry, gateway, sink).run();
}

EvalSummary deploy(const Plan& best, std::span<const LabeledQuery> queries, const KnowledgeBase& kb,
                   const ToolRegistry& registry, Gateway* gateway, const OptimizerConfig& config) {
  return evaluate_plan(best, queries, kb, registry, gateway, eval_options(config));
}

std::string memory_json(const MemoryBank& bank) {
  ordered_json j;
  j["capacity"] = bank.capacity();
  j["entries"] = ordered_json::array();
  for (const auto& e : bank.entries())
    j["entries"].push_back({{"iteration", e.iteration},
                            {"performance", e.performance},
                            {"sequence", e.sequence},
                            {"instruction", e.instruction},
                            {"plan", e.plan_text}});
  return j.dump(2) + "\n";
}

std::vector<SweepCell> sweep_thresholds(const OptimizerConfig& base, const std::vector<double>& ls,
                                        const std::vector<double>& hs, const KnowledgeBase& kb,
                                        const QuerySplit& split, const ToolRegistry& registry,
                                        const GatewayFactory& make_gateway) {
  std::vector<SweepCell> cells;
  for (double l : ls) {
    for (double h : hs) {
      SweepCell cell;
      cell.l = l;
      cell.h = h;
      try {
        OptimizerConfig cfg = base;
        cfg.upper_bound_l = l;
        cfg.lower_bound_h = h;
        cfg.validate();
        auto gateway = make_gateway();
        auto run = run_optimization(cfg, kb, split, registry, *gateway);
        if (!run.any_succeeded) throw Error("every iteration failed");
        cell.best_iteration = run.best_iteration;
        cell.value = deploy(run.best_plan, split.test, kb, registry, gateway.get(), cfg).primary;
      } catch (const Error& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_csv(const std::vector<SweepCell>& cells, PrimaryMetric metric) {
  std::string out = "l,h," + to_string(metric) + ",best_iteration,failed\n";
  for (const auto& c : cells)
    out += text::format_number(c.l) + "," + text::format_number(c.h) + "," +
           (c.failed ? std::string() : text::format_number(c.value)) + "," +
           std::to_string(c.best_iteration) + "," + (c.failed ? "1" : "0") + "\n";
  return out;
}

std::string sweep_table_csv(const std::vector<SweepCell>& cells, PrimaryMetric metric) {
  std::vector<double> ls, hs;
  for (const auto& c : cells) {
    if (std::find(ls.begin(), ls.end(), c.l) == ls.end()) ls.push_back(c.l);
    if (std::find(hs.begin(), hs.end(), c.h) == hs.end()) hs.push_back(c.h);
  }
  std::string out = to_string(metric) + " l\\h";
  for (double h : hs) out += "," + text::format_number(h);
  out += "\n";
  for (double l : ls) {
    out += text::format_number(l);
    for (double h : hs) {
      auto it = std::find_if(cells.begin(), cells.end(), [&](const SweepCell& c) { return c.l == l && c.h == h; });
      out += ",";
      if (it != cells.end() && !it->failed) out += text::format_number(it->value);
    }
    out += "\n";
  }
  return out;
}

}  // namespace kbopt
