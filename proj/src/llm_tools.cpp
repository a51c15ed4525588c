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

#include "kbopt/llm_tools.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <json.hpp>

#include "kbopt/text.hpp"

namespace kbopt {

using nlohmann::json;

namespace {

// Models like to wrap JSON in a ```json fence; accept that.
json parse_reply(const std::string& reply, const std::string& role) {
  std::string body = text::trim(reply);
  if (body.rfind("```", 0) == 0) {
    auto nl = body.find('\n');
    auto end = body.rfind("```");
    if (nl != std::string::npos && end != std::string::npos && end > nl)
      body = text::trim(body.substr(nl + 1, end - nl - 1));
  }
  if (body == "NA") return json("NA");  // bare "nothing applies"
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
    throw GatewayError(GatewayError::Kind::malformed, "reply for '" + role + "' is not valid JSON");
  }
}

json ask(Gateway& gateway, const std::string& role, const std::string& prompt) {
  CompletionRequest req;
  req.role = role;
  req.prompt = prompt;
  return parse_reply(gateway.complete(req).text, role);
}

std::string numbered(const TextList& items, const std::string& label) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i)
    out += label + " " + std::to_string(i + 1) + ": " + items[i] + "\n";
  return out;
}

std::string joined(const TextList& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

const json& array_of(const json& reply, std::size_t n, const std::string& role) {
  if (!reply.is_array())
    throw SchemaViolation("'" + role + "' reply must be a JSON array");
  if (reply.size() != n)
    throw SchemaViolation("'" + role + "' reply has " + std::to_string(reply.size()) +
                          " entries, expected " + std::to_string(n));
  return reply;
}

TextList string_array(const json& reply, std::size_t n, const std::string& role) {
  TextList out;
  for (const auto& v : array_of(reply, n, role)) {
    if (!v.is_string()) throw SchemaViolation("'" + role + "' reply entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

TextList phrase_descriptions(std::span<const EntityId> ids, const KnowledgeBase& kb) {
  TextList out;
  for (auto id : ids) {
    const auto& e = kb.at(id);
    std::string d = e.document;
    if (!e.phrases.empty()) {
      d += " Regions:";
      for (const auto& p : e.phrases) d += " [" + std::to_string(p.patch_id) + "] " + p.text + ";";
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

AttrMap parse_attribute_from_query(const std::string& query, const TextList& attributes,
                                   Gateway& gateway, const std::string& role) {
  if (attributes.empty()) throw InvalidToolInput("ParseAttributeFromQuery needs at least one attribute");
  auto reply = ask(gateway, role,
                   "Parse the query into a JSON object whose keys are exactly these attributes: " +
                       joined(attributes) +
                       ". Use the string \"NA\" for attributes the query does not mention.\n"
                       "Query: " + query + "\nReply with the JSON object only.");
  if (!reply.is_object()) throw GatewayError(GatewayError::Kind::malformed, "'" + role + "' reply is not a JSON object");
  AttrMap out;
  for (const auto& a : attributes) {
    auto it = reply.find(a);
    if (it == reply.end()) {
      out[a] = "NA";
    } else if (!it->is_string()) {
      throw SchemaViolation("attribute '" + a + "' must map to a string");
    } else {
      out[a] = it->get<std::string>();
    }
  }
  return out;
}

AttrMap parse_attribute_rule_based(const std::string& query, const TextList& attributes) {
  if (attributes.empty()) throw InvalidToolInput("ParseAttributeFromQuery needs at least one attribute");
  // words with surrounding punctuation stripped, original case kept
  std::vector<std::string> words;
  std::string cur;
  for (char c : query + " ") {
    if (std::isspace(static_cast<unsigned char>(c))) {
      auto b = cur.find_first_not_of(".,;:!?\"'()");
      auto e = cur.find_last_not_of(".,;:!?\"'()");
      if (b != std::string::npos) words.push_back(cur.substr(b, e - b + 1));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  AttrMap out;
  for (const auto& a : attributes) {
    out[a] = "NA";
    auto key = text::case_fold(a);
    for (std::size_t i = 1; i < words.size(); ++i) {
      if (text::case_fold(words[i]) == key) {
        out[a] = words[i - 1];
        break;
      }
    }
  }
  return out;
}

TextList classify_by_llm(const TextList& texts, const TextList& classes, Gateway& gateway,
                         const std::string& role) {
  if (classes.empty()) throw InvalidToolInput("ClassifyByLLM needs at least one class");
  auto reply = ask(gateway, role,
                   "Classify each text into exactly one of these classes: " + joined(classes) +
                       ". Use \"NA\" when no class applies.\n" + numbered(texts, "Text") +
                       "Reply with a JSON array of " + std::to_string(texts.size()) +
                       " strings, one label per text, in order.");
  if (reply == json("NA")) return TextList(texts.size(), "NA");
  auto labels = string_array(reply, texts.size(), role);
  for (const auto& l : labels)
    if (l != "NA" && std::find(classes.begin(), classes.end(), l) == classes.end())
      throw SchemaViolation("label '" + l + "' is neither a requested class nor \"NA\"");
  return labels;
}

ScoreMap check_requirements_by_llm(std::span<const EntityId> ids, const std::string& requirement,
                                   const KnowledgeBase& kb, Gateway& gateway,
                                   const std::string& role) {
  TextList docs;
  for (auto id : ids) docs.push_back(full_info(kb, id));
  auto reply = ask(gateway, role,
                   "Requirement: " + requirement + "\nFor each node below, decide whether it satisfies the requirement.\n" +
                       numbered(docs, "Node") + "Reply with a JSON array of " +
                       std::to_string(ids.size()) + " booleans, in order.");
  ScoreMap out;
  const auto& arr = array_of(reply, ids.size(), role);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!arr[i].is_boolean()) throw SchemaViolation("'" + role + "' reply entries must be booleans");
    out[ids[i]] = arr[i].get<bool>() ? 1.0 : 0.0;
  }
  return out;
}

ScoreMap satisfaction_score_by_llm(std::span<const EntityId> ids, const std::string& query,
                                   const KnowledgeBase& kb, Gateway& gateway,
                                   const std::string& role) {
  TextList docs;
  for (auto id : ids) docs.push_back(full_info(kb, id));
  auto reply = ask(gateway, role,
                   "Query: " + query + "\nScore how well each node satisfies the query, from 0 to 1.\n" +
                       numbered(docs, "Node") + "Reply with a JSON array of " +
                       std::to_string(ids.size()) + " numbers, in order.");
  if (reply.is_number() && ids.size() == 1) reply = json::array({reply});
  ScoreMap out;
  const auto& arr = array_of(reply, ids.size(), role);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!arr[i].is_number()) throw SchemaViolation("'" + role + "' reply entries must be numbers");
    double s = arr[i].get<double>();
    if (!std::isfinite(s) || s < 0.0 || s > 1.0)
      throw SchemaViolation("satisfaction score " + text::format_number(s) + " lies outside [0, 1]");
    out[ids[i]] = s;
  }
  return out;
}

TextList extract_relevant_info_by_llm(const TextList& texts, const std::string& extract_term,
                                      Gateway& gateway, const std::string& role) {
  auto reply = ask(gateway, role,
                   "Extract the sentences relevant to '" + extract_term + "' from each text, or \"NA\" if none.\n" +
                       numbered(texts, "Text") + "Reply with a JSON array of " +
                       std::to_string(texts.size()) + " strings, in order.");
  return string_array(reply, texts.size(), role);
}

std::string summarize_texts_by_llm(const TextList& texts, Gateway& gateway, const std::string& role) {
  CompletionRequest req;
  req.role = role;
  req.prompt = "Summarize the following texts in a few sentences.\n" + numbered(texts, "Text");
  auto summary = text::trim(gateway.complete(req).text);
  if (summary.empty()) throw SchemaViolation("'" + role + "' reply is empty");
  return summary;
}

TextList vqa_by_llm(const std::string& question, std::span<const EntityId> ids,
                    const KnowledgeBase& kb, Gateway& gateway, const std::string& role) {
  auto reply = ask(gateway, role,
                   "Question: " + question + "\nAnswer the question for each image below.\n" +
                       numbered(phrase_descriptions(ids, kb), "Image") + "Reply with a JSON array of " +
                       std::to_string(ids.size()) + " strings, in order.");
  return string_array(reply, ids.size(), role);
}

TextList extract_visual_attributes_by_llm(const TextList& attributes, std::span<const EntityId> ids,
                                          const KnowledgeBase& kb, Gateway& gateway,
                                          const std::string& role) {
  if (attributes.empty()) throw InvalidToolInput("ExtractVisualAttributesByLLM needs at least one attribute");
  auto reply = ask(gateway, role,
                   "Describe these attributes for each image: " + joined(attributes) + "\n" +
                       numbered(phrase_descriptions(ids, kb), "Image") + "Reply with a JSON array of " +
                       std::to_string(ids.size()) + " strings, in order.");
  return string_array(reply, ids.size(), role);
}

}  // namespace kbopt
