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

#include "kbopt/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "kbopt/text.hpp"

namespace kbopt {

EmptyTruth::EmptyTruth() : Error("metric needs a non-empty truth set") {}

std::string to_string(PrimaryMetric m) {
  switch (m) {
    case PrimaryMetric::hit1: return "hit1";
    case PrimaryMetric::hit5: return "hit5";
    case PrimaryMetric::recall20: return "recall20";
    case PrimaryMetric::mrr: return "mrr";
  }
  return "?";
}

PrimaryMetric primary_metric_from_string(const std::string& name) {
  for (auto m : {PrimaryMetric::hit1, PrimaryMetric::hit5, PrimaryMetric::recall20, PrimaryMetric::mrr})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown metric '" + name + "' (expected hit1, hit5, recall20 or mrr)");
}

IdList rank_from_scores(const ScoreMap& scores) {
  std::vector<std::pair<EntityId, double>> v(scores.begin(), scores.end());
  // map order is ascending id, so a stable sort on score alone breaks ties by id
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  IdList out;
  out.reserve(v.size());
  for (const auto& [id, s] : v) out.push_back(id);
  return out;
}

namespace {

std::set<EntityId> truth_set(std::span<const EntityId> truth) {
  if (truth.empty()) throw EmptyTruth();
  return {truth.begin(), truth.end()};
}

std::size_t found_in_prefix(std::span<const EntityId> ranked, const std::set<EntityId>& truth,
                            std::size_t k) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) n += truth.count(ranked[i]);
  return n;
}

}  // namespace

double hit_at_k(std::span<const EntityId> ranked, std::span<const EntityId> truth, std::size_t k) {
  return found_in_prefix(ranked, truth_set(truth), k) > 0 ? 1.0 : 0.0;
}

double recall_at_k(std::span<const EntityId> ranked, std::span<const EntityId> truth, std::size_t k) {
  auto t = truth_set(truth);
  return static_cast<double>(found_in_prefix(ranked, t, k)) / static_cast<double>(t.size());
}

double mrr(std::span<const EntityId> ranked, std::span<const EntityId> truth) {
  auto t = truth_set(truth);
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (t.count(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

double metric_value(const MetricRecord& r, PrimaryMetric m) {
  switch (m) {
    case PrimaryMetric::hit1: return r.hit1;
    case PrimaryMetric::hit5: return r.hit5;
    case PrimaryMetric::recall20: return r.recall20;
    case PrimaryMetric::mrr: return r.mrr;
  }
  return 0.0;
}

MetricRecord score_ranking(std::int64_t query_id, std::span<const EntityId> ranked,
                           std::span<const EntityId> truth, PrimaryMetric primary) {
  MetricRecord r;
  r.query_id = query_id;
  r.hit1 = hit_at_k(ranked, truth, 1);
  r.hit5 = hit_at_k(ranked, truth, 5);
  r.recall20 = recall_at_k(ranked, truth, 20);
  r.mrr = mrr(ranked, truth);
  r.primary = metric_value(r, primary);
  return r;
}

EvalSummary summarize(std::vector<MetricRecord> records, PrimaryMetric primary) {
  EvalSummary s;
  s.primary_metric = primary;
  s.count = records.size();
  s.empty = records.empty();
  for (const auto& r : records) {
    s.hit1 += r.hit1;
    s.hit5 += r.hit5;
    s.recall20 += r.recall20;
    s.mrr += r.mrr;
    s.primary += r.primary;
    s.failed += r.failed ? 1 : 0;
  }
  if (!s.empty) {
    double n = static_cast<double>(s.count);
    s.hit1 /= n;
    s.hit5 /= n;
    s.recall20 /= n;
    s.mrr /= n;
    s.primary /= n;
  }
  s.records = std::move(records);
  return s;
}

IdList select_candidates(const std::string& query, const KnowledgeBase& kb,
                         const CandidatePolicy& policy) {
  IdList all = kb.candidate_ids();
  if (policy.kind == CandidatePolicy::Kind::all_of_type || all.size() <= policy.n) return all;
  IdList top = rank_from_scores(query_entity_similarity(query, all, kb));
  top.resize(policy.n);
  std::sort(top.begin(), top.end());
  return top;
}

namespace {

MetricRecord evaluate_one(const Plan& plan, const LabeledQuery& q, const KnowledgeBase& kb,
                          const ToolRegistry& registry, Gateway* gateway, const EvalOptions& opt) {
  MetricRecord failed;
  failed.query_id = q.query_id;
  failed.failed = true;
  try {
    IdList cands = select_candidates(q.text, kb, opt.candidates);
    ScoreMap scores = execute_plan(plan, q.text, cands, kb, registry, gateway, opt.budget);
    return score_ranking(q.query_id, rank_from_scores(scores), q.answers, opt.primary);
  } catch (const TimeoutError& e) {
    failed.failure = "timeout";
    failed.error = e.what();
  } catch (const ToolError& e) {
    failed.failure = "tool";
    failed.error = e.what();
  }
  return failed;
}

}  // namespace

EvalSummary evaluate_plan(const Plan& plan, std::span<const LabeledQuery> queries,
                          const KnowledgeBase& kb, const ToolRegistry& registry, Gateway* gateway,
                          const EvalOptions& options) {
  std::vector<MetricRecord> records(queries.size());
  std::size_t width = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(queries.size(), 1));
  if (width == 1) {
    for (std::size_t i = 0; i < queries.size(); ++i)
      records[i] = evaluate_one(plan, queries[i], kb, registry, gateway, options);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < width; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < queries.size(); i = next++) {
          try {
            records[i] = evaluate_one(plan, queries[i], kb, registry, gateway, options);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  return summarize(std::move(records), options.primary);
}

std::string summary_csv(const EvalSummary& s) {
  auto num = [](double v) { return text::format_number(v); };
  std::string out = "query_id,hit1,hit5,recall20,mrr,failed\n";
  for (const auto& r : s.records)
    out += std::to_string(r.query_id) + "," + num(r.hit1) + "," + num(r.hit5) + "," + num(r.recall20) +
           "," + num(r.mrr) + "," + (r.failed ? "1" : "0") + "\n";
  out += "mean," + num(s.hit1) + "," + num(s.hit5) + "," + num(s.recall20) + "," + num(s.mrr) + "," +
         std::to_string(s.failed) + "\n";
  return out;
}

std::string summary_json(const EvalSummary& s) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["empty"] = s.empty;
  j["failed"] = s.failed;
  j["primary_metric"] = to_string(s.primary_metric);
  j["means"] = {{"hit1", s.hit1}, {"hit5", s.hit5}, {"recall20", s.recall20}, {"mrr", s.mrr}, {"primary", s.primary}};
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : s.records) {
    nlohmann::ordered_json rec = {{"query_id", r.query_id}, {"hit1", r.hit1}, {"hit5", r.hit5},
                                  {"recall20", r.recall20}, {"mrr", r.mrr}, {"failed", r.failed}};
    if (r.failed) {
      rec["failure"] = r.failure;
      rec["error"] = r.error;
    }
    j["records"].push_back(std::move(rec));
  }
  return j.dump(2) + "\n";
}

}  // namespace kbopt
