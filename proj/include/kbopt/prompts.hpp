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

#include <string>
#include <vector>

#include "kbopt/plan.hpp"

namespace kbopt {

class MissingPlaceholderData : public Error {
 public:
  explicit MissingPlaceholderData(const std::string& placeholder);
};

// The raw templates, with <name> placeholders.
const std::string& actor_template();
const std::string& contrastor_template();

// Replaces every <name> in `tmpl`; a placeholder without a value throws.
std::string fill_template(const std::string& tmpl,
                          const std::vector<std::pair<std::string, std::string>>& values);

std::string render_schema(const KbSchema& schema);

std::string render_actor_prompt(const KbSchema& schema, const ToolRegistry& registry,
                                 const std::vector<std::string>& example_queries,
                                 std::size_t n_init_candidates,
                                 const std::vector<std::string>& candidate_types);

struct QueryMetric {
  std::string query;
  double metric = 0.0;
};

std::string render_contrastor_prompt(const std::string& initial_prompt, const Plan& previous_plan,
                                     const std::vector<QueryMetric>& positives,
                                     const std::vector<QueryMetric>& negatives,
                                     const std::string& metric_name);

struct MemoryExcerpt {
  std::string plan_text;
  double performance = 0.0;
  int iteration = 0;
};

// Actor prompt after the cold start: the initial prompt followed by memory,
// the previous plan and the latest instruction.
std::string render_actor_followup(const std::string& initial_prompt,
                                  const std::vector<MemoryExcerpt>& memory,
                                  const std::string& previous_plan, const std::string& instruction);

// Adds the violation list to a prompt being retried, keeping a trailing
// "Your output:" line last.
std::string append_errors(const std::string& prompt, const std::vector<std::string>& errors);

}  // namespace kbopt
