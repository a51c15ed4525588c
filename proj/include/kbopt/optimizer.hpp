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
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kbopt/gateway.hpp"
#include "kbopt/metrics.hpp"
#include "kbopt/prompts.hpp"

namespace kbopt {

struct OptimizerConfig {
  double lower_bound_h = 0.5;
  double upper_bound_l = 0.5;
  std::size_t batch_size = 20;
  // Trace records per run, the cold start included.
  int iterations = 25;
  std::size_t memory_top_k = 5;
  int actor_retry_limit = 3;  // re-prompts after the first attempt
  PrimaryMetric primary_metric = PrimaryMetric::recall20;
  std::uint64_t seed = 0;
  ExecBudget budget;
  bool adaptive_negative_bound = false;
  bool inclusive_bounds = false;  // ">= l" / "<= h" instead of strict
  CandidatePolicy candidates;
  std::size_t parallelism = 1;
  std::size_t n_example_queries = 5;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
};

struct PoolEntry {
  std::int64_t query_id = 0;
  double metric = 0.0;

  friend bool operator==(const PoolEntry&, const PoolEntry&) = default;
};

struct QueryPools {
  std::vector<PoolEntry> positive;
  std::vector<PoolEntry> negative;
  std::vector<PoolEntry> excluded;
};

// positive iff m > l, negative iff m < h (>= / <= when inclusive).
QueryPools partition_queries(std::span<const PoolEntry> records, double l, double h,
                             bool inclusive = false);

class InsufficientContrast : public Error {
 public:
  InsufficientContrast(std::size_t positives, std::size_t negatives);
};

struct ContrastBatch {
  std::vector<PoolEntry> positives;
  std::vector<PoolEntry> negatives;
  bool shrunk = false;
};

// b/2 from each pool without replacement; both sides shrink to the smaller pool.
ContrastBatch sample_contrast_batch(const QueryPools& pools, std::size_t b, std::mt19937_64& rng);

struct MemoryEntry {
  std::string plan_text;
  std::string instruction;
  double performance = 0.0;
  int iteration = 0;
  std::uint64_t sequence = 0;  // insertion order, assigned by the bank
};

class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity = 5);

  // Keeps the top entries by performance, newer first on ties.
  void insert(MemoryEntry entry);

  const std::vector<MemoryEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  std::vector<MemoryExcerpt> excerpts() const;

 private:
  std::size_t capacity_;
  std::uint64_t next_sequence_ = 0;
  std::vector<MemoryEntry> entries_;
};

std::string comparator_step(const std::vector<QueryMetric>& positives,
                            const std::vector<QueryMetric>& negatives, const Plan& current,
                            const std::string& initial_prompt, const std::string& metric_name,
                            Gateway& gateway, int iteration);

class ActorFailed : public Error {
 public:
  ActorFailed(int attempts, std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct ActorAttempt {
  int attempt = 0;
  std::vector<std::string> errors;  // empty for the accepted attempt
};

struct ActorResult {
  Plan plan;
  std::vector<ActorAttempt> attempts;
};

// Asks for a plan, re-prompting with the violations until one validates.
ActorResult actor_step(const std::string& prompt, Gateway& gateway, const ToolRegistry& registry,
                       const KbSchema& schema, int retry_limit, int iteration);

struct TraceRecord {
  int iteration = 0;
  bool ok = true;
  std::string failure;   // reason when !ok
  std::string feedback;  // ok, validity or timeout
  double effective_h = 0.0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t n_excluded = 0;
  bool batch_shrunk = false;
  std::vector<std::int64_t> batch_positive;
  std::vector<std::int64_t> batch_negative;
  std::string instruction;
  std::vector<ActorAttempt> attempts;
  std::string plan;
  double train_metric = 0.0;  // the previous plan on train
  double batch_metric = 0.0;
  double validation_metric = 0.0;
  std::size_t validation_failed = 0;
};

std::string trace_line(const TraceRecord& r);

struct RunResult {
  Plan best_plan;
  int best_iteration = -1;
  double best_validation = 0.0;
  EvalSummary best_validation_summary;
  std::vector<TraceRecord> trace;
  MemoryBank memory;
  bool any_succeeded = false;
};

// Called after every iteration, in order.
using TraceSink = std::function<void(const TraceRecord&)>;

RunResult run_optimization(const OptimizerConfig& config, const KnowledgeBase& kb,
                           const QuerySplit& split, const ToolRegistry& registry, Gateway& gateway,
                           const TraceSink& sink = {});

EvalSummary deploy(const Plan& best, std::span<const LabeledQuery> queries, const KnowledgeBase& kb,
                   const ToolRegistry& registry, Gateway* gateway, const OptimizerConfig& config);

std::string memory_json(const MemoryBank& bank);

struct SweepCell {
  double l = 0.0;
  double h = 0.0;
  double value = 0.0;  // test primary metric
  bool failed = false;
  std::string error;
  int best_iteration = -1;
};

using GatewayFactory = std::function<std::unique_ptr<Gateway>()>;

// One full optimization + deployment per (l, h), each on a fresh gateway.
std::vector<SweepCell> sweep_thresholds(const OptimizerConfig& base, const std::vector<double>& ls,
                                        const std::vector<double>& hs, const KnowledgeBase& kb,
                                        const QuerySplit& split, const ToolRegistry& registry,
                                        const GatewayFactory& make_gateway);

// Long format: one row per cell, l-major.
std::string sweep_csv(const std::vector<SweepCell>& cells, PrimaryMetric metric);
// Matrix with one row per l and one column per h.
std::string sweep_table_csv(const std::vector<SweepCell>& cells, PrimaryMetric metric);

}  // namespace kbopt
