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

#include <span>
#include <string>

#include "kbopt/gateway.hpp"
#include "kbopt/tools.hpp"

namespace kbopt {

// The gateway's reply parsed but does not fit the tool's output schema.
// Replies are rejected, never clamped or padded.
class SchemaViolation : public Error {
 public:
  using Error::Error;
};

class InvalidToolInput : public Error {
 public:
  using Error::Error;
};

// Each wrapper renders one prompt, makes exactly one gateway call under
// `role`, and validates the JSON reply. Unparseable replies raise
// GatewayError(malformed).

// Reply: JSON object attribute -> string. Missing attributes become "NA".
AttrMap parse_attribute_from_query(const std::string& query, const TextList& attributes,
                                   Gateway& gateway, const std::string& role = "parse_attributes");

// Offline reading of "<value> <attribute>" marker phrases; "NA" when absent.
AttrMap parse_attribute_rule_based(const std::string& query, const TextList& attributes);

// Reply: array with one label per text, each a class or "NA"; a bare "NA"
// labels every text "NA".
TextList classify_by_llm(const TextList& texts, const TextList& classes, Gateway& gateway,
                         const std::string& role = "classify");

// Reply: array of booleans, one per id. Scores are 1.0 / 0.0.
ScoreMap check_requirements_by_llm(std::span<const EntityId> ids, const std::string& requirement,
                                   const KnowledgeBase& kb, Gateway& gateway,
                                   const std::string& role = "check_requirement");

// Reply: array of numbers in [0, 1], one per id (a bare number for one id).
ScoreMap satisfaction_score_by_llm(std::span<const EntityId> ids, const std::string& query,
                                   const KnowledgeBase& kb, Gateway& gateway,
                                   const std::string& role = "satisfaction_score");

// Reply: array of strings (relevant sentences or "NA"), one per text.
TextList extract_relevant_info_by_llm(const TextList& texts, const std::string& extract_term,
                                      Gateway& gateway, const std::string& role = "extract_relevant");

// Reply: the summary itself, plain text.
std::string summarize_texts_by_llm(const TextList& texts, Gateway& gateway,
                                   const std::string& role = "summarize");

// Image tools answer from the phrase annotations; replies are arrays of strings.
TextList vqa_by_llm(const std::string& question, std::span<const EntityId> ids,
                    const KnowledgeBase& kb, Gateway& gateway, const std::string& role = "vqa");
TextList extract_visual_attributes_by_llm(const TextList& attributes, std::span<const EntityId> ids,
                                          const KnowledgeBase& kb, Gateway& gateway,
                                          const std::string& role = "visual_attributes");

}  // namespace kbopt
