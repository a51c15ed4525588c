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

#include <algorithm>
#include <cmath>
#include <set>

#include "kbopt/text.hpp"
#include "kbopt/tools.hpp"

namespace kbopt {

DimensionMismatch::DimensionMismatch(std::size_t a, std::size_t b)
    : Error("embedding dimensions differ: " + std::to_string(a) + " vs " + std::to_string(b)) {}

std::vector<Embedding> text_embedding(std::span<const std::string> strings) {
  std::vector<Embedding> out;
  out.reserve(strings.size());
  for (const auto& s : strings) {
    Embedding v(kEmbeddingDim, 0.0);
    for (const auto& tok : text::tokenize(s)) v[text::hash64(tok, kEmbeddingSeed) % kEmbeddingDim] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

double embedding_similarity(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

RelationMap relation_dict(const KnowledgeBase& kb, EntityId id) {
  RelationMap out;
  const auto& rels = kb.relations();
  for (auto r : kb.out_edges(id)) out[rels[r].type].push_back(rels[r].dst);
  for (auto r : kb.in_edges(id)) out["inv_" + rels[r].type].push_back(rels[r].src);
  for (auto& [key, ids] : out) std::sort(ids.begin(), ids.end());
  return out;
}

std::string full_info(const KnowledgeBase& kb, EntityId id) {
  const Entity& e = kb.at(id);
  std::string out = e.document;
  for (const auto& [key, ids] : relation_dict(kb, id)) {
    out += "\n" + key + ":";
    for (std::size_t i = 0; i < ids.size(); ++i) out += (i == 0 ? " " : ", ") + to_string(ids[i]);
  }
  if (!e.phrases.empty()) {
    out += "\nphrases:";
    for (std::size_t i = 0; i < e.phrases.size(); ++i) out += (i == 0 ? " " : "; ") + e.phrases[i].text;
  }
  return out;
}

ScoreMap exact_match_score(std::string_view needle, std::span<const EntityId> candidates,
                           const KnowledgeBase& kb) {
  auto folded = text::case_fold(needle);
  ScoreMap out;
  for (auto id : candidates) {
    auto info = text::case_fold(full_info(kb, id));
    out[id] = info.find(folded) != std::string::npos ? 1.0 : 0.0;
  }
  return out;
}

ScoreMap token_match_score(std::string_view needle, std::span<const EntityId> candidates,
                           const KnowledgeBase& kb) {
  auto toks = text::tokenize(needle);
  std::set<std::string> want(toks.begin(), toks.end());
  ScoreMap out;
  for (auto id : candidates) {
    if (want.empty()) {
      kb.at(id);
      out[id] = 0.0;
      continue;
    }
    auto info = text::tokenize(full_info(kb, id));
    std::set<std::string> have(info.begin(), info.end());
    std::size_t hit = 0;
    for (const auto& t : want) hit += have.count(t);
    out[id] = static_cast<double>(hit) / static_cast<double>(want.size());
  }
  return out;
}

ScoreMap query_entity_similarity(std::string_view query, std::span<const EntityId> candidates,
                                 const KnowledgeBase& kb) {
  std::vector<std::string> q{std::string(query)};
  auto qv = text_embedding(q).front();
  ScoreMap out;
  for (auto id : candidates) {
    std::vector<std::string> info{full_info(kb, id)};
    out[id] = embedding_similarity(qv, text_embedding(info).front());
  }
  return out;
}

IdList entity_ids_by_type(const KnowledgeBase& kb, const std::string& type) {
  return kb.ids_of_type(type);
}

std::string entity_type(const KnowledgeBase& kb, EntityId id) { return kb.at(id).type; }

TextList entity_documents(const KnowledgeBase& kb, std::span<const EntityId> ids) {
  TextList out;
  for (auto id : ids) out.push_back(kb.at(id).document);
  return out;
}

PhraseLists bag_of_phrases(const KnowledgeBase& kb, std::span<const EntityId> ids) {
  PhraseLists out;
  for (auto id : ids) {
    TextList phrases;
    for (const auto& p : kb.at(id).phrases) phrases.push_back(p.text);
    out.push_back(std::move(phrases));
  }
  return out;
}

ScoreMap phrase_exact_match_score(std::string_view needle, std::span<const EntityId> candidates,
                                  const KnowledgeBase& kb) {
  auto want = text::case_fold(text::trim(needle));
  ScoreMap out;
  for (auto id : candidates) {
    double s = 0.0;
    for (const auto& p : kb.at(id).phrases)
      if (text::case_fold(text::trim(p.text)) == want) s = 1.0;
    out[id] = s;
  }
  return out;
}

ScoreMap phrase_f1_score(std::string_view needle, std::span<const EntityId> candidates,
                         const KnowledgeBase& kb) {
  auto nt = text::tokenize(needle);
  std::set<std::string> want(nt.begin(), nt.end());
  ScoreMap out;
  for (auto id : candidates) {
    double best = 0.0;
    for (const auto& p : kb.at(id).phrases) {
      auto pt = text::tokenize(p.text);
      std::set<std::string> have(pt.begin(), pt.end());
      if (want.empty() || have.empty()) continue;
      std::size_t common = 0;
      for (const auto& t : want) common += have.count(t);
      if (common == 0) continue;
      double precision = static_cast<double>(common) / static_cast<double>(have.size());
      double recall = static_cast<double>(common) / static_cast<double>(want.size());
      best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    out[id] = best;
  }
  return out;
}

}  // namespace kbopt
