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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kbopt/plan.hpp"

namespace kbopt {

class EmptyTruth : public Error {
 public:
  EmptyTruth();
};

enum class PrimaryMetric { hit1, hit5, recall20, mrr };

std::string to_string(PrimaryMetric m);
PrimaryMetric primary_metric_from_string(const std::string& name);

// Descending score, ties by ascending id.
IdList rank_from_scores(const ScoreMap& scores);

// `truth` must be non-empty; duplicates are ignored.
double hit_at_k(std::span<const EntityId> ranked, std::span<const EntityId> truth, std::size_t k);
// |truth within the first k| / |truth|
double recall_at_k(std::span<const EntityId> ranked, std::span<const EntityId> truth, std::size_t k);
// 1 / rank of the first truth id, 0 when none is ranked.
double mrr(std::span<const EntityId> ranked, std::span<const EntityId> truth);

struct MetricRecord {
  std::int64_t query_id = 0;
  double hit1 = 0.0;
  double hit5 = 0.0;
  double recall20 = 0.0;
  double mrr = 0.0;
  double primary = 0.0;
  bool failed = false;
  std::string failure;  // "timeout" or "tool" when failed
  std::string error;
};

double metric_value(const MetricRecord& r, PrimaryMetric m);
MetricRecord score_ranking(std::int64_t query_id, std::span<const EntityId> ranked,
                           std::span<const EntityId> truth, PrimaryMetric primary);

struct EvalSummary {
  std::vector<MetricRecord> records;
  PrimaryMetric primary_metric = PrimaryMetric::hit1;
  std::size_t count = 0;
  std::size_t failed = 0;
  bool empty = true;  // no queries: every mean is reported as 0
  double hit1 = 0.0;
  double hit5 = 0.0;
  double recall20 = 0.0;
  double mrr = 0.0;
  double primary = 0.0;
};

EvalSummary summarize(std::vector<MetricRecord> records, PrimaryMetric primary);

struct CandidatePolicy {
  enum class Kind { all_of_type, top_n };
  Kind kind = Kind::all_of_type;
  std::size_t n = 100;
};

// Ascending candidate ids for one query.
IdList select_candidates(const std::string& query, const KnowledgeBase& kb,
                         const CandidatePolicy& policy);

struct EvalOptions {
  ExecBudget budget;
  CandidatePolicy candidates;
  PrimaryMetric primary = PrimaryMetric::hit1;
  std::size_t parallelism = 1;
};

// Per-query timeouts and tool errors become failed all-zero records; record
// order follows `queries` whatever the parallelism.
EvalSummary evaluate_plan(const Plan& plan, std::span<const LabeledQuery> queries,
                          const KnowledgeBase& kb, const ToolRegistry& registry, Gateway* gateway,
                          const EvalOptions& options);

// Columns query_id, hit1, hit5, recall20, mrr, failed; last row "mean".
std::string summary_csv(const EvalSummary& s);
std::string summary_json(const EvalSummary& s);

}  // namespace kbopt
