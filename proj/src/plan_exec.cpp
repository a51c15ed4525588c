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
#include <map>

#include "kbopt/plan.hpp"
#include "kbopt/text.hpp"

namespace kbopt {

TimeoutError::TimeoutError(std::size_t statement, Reason reason, const std::string& what)
    : Error(what), statement_(statement), reason_(reason) {}

ToolError::ToolError(std::size_t statement, const std::string& what)
    : Error("statement " + std::to_string(statement) + ": " + what), statement_(statement) {}

ScoreMap normalize_scores(const ScoreMap& m) {
  if (m.empty()) return m;
  auto [lo, hi] = std::minmax_element(m.begin(), m.end(),
                                      [](const auto& a, const auto& b) { return a.second < b.second; });
  double min = lo->second, range = hi->second - lo->second;
  ScoreMap out;
  for (const auto& [id, s] : m) out[id] = range > 0.0 ? (s - min) / range : 0.5;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::string preview(const Value& v) {
  struct {
    std::string operator()(const std::string& s) const { return "\"" + s + "\""; }
    std::string operator()(const TextList& l) const { return std::to_string(l.size()) + " texts"; }
    std::string operator()(const IdList& l) const { return std::to_string(l.size()) + " ids"; }
    std::string operator()(EntityId id) const { return "id " + to_string(id); }
    std::string operator()(double d) const { return text::format_number(d); }
    std::string operator()(const ScoreMap& m) const {
      std::vector<std::pair<EntityId, double>> top(m.begin(), m.end());
      std::stable_sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      std::string out = "{";
      for (std::size_t i = 0; i < top.size() && i < 5; ++i)
        out += (i ? ", " : "") + to_string(top[i].first) + ": " + text::format_fixed3(top[i].second);
      return out + (top.size() > 5 ? ", ...}" : "}");
    }
    std::string operator()(const Embedding& e) const { return "vector[" + std::to_string(e.size()) + "]"; }
    std::string operator()(const std::vector<Embedding>& l) const { return std::to_string(l.size()) + " vectors"; }
    std::string operator()(const AttrMap& m) const {
      std::string out = "{";
      bool first = true;
      for (const auto& [k, v] : m) {
        out += (first ? "" : ", ") + k + ": " + v;
        first = false;
      }
      return out + "}";
    }
    std::string operator()(const RelationMap& m) const {
      std::string out = "{";
      bool first = true;
      for (const auto& [k, v] : m) {
        out += (first ? "" : ", ") + k + ": " + std::to_string(v.size());
        first = false;
      }
      return out + "}";
    }
    std::string operator()(const PhraseLists& l) const { return std::to_string(l.size()) + " phrase lists"; }
  } visitor;
  return std::visit(visitor, v);
}

class Interpreter {
 public:
  Interpreter(const Plan& plan, const std::string& query, std::span<const EntityId> candidates,
              const KnowledgeBase& kb, const ToolRegistry& registry, Gateway* gateway,
              const ExecBudget& budget, ExecLog* log)
      : plan_(plan),
        query_(query),
        candidates_(candidates.begin(), candidates.end()),
        registry_(registry),
        budget_(budget),
        log_(log),
        ctx_{kb, gateway, {}} {
    std::sort(candidates_.begin(), candidates_.end());
    candidates_.erase(std::unique(candidates_.begin(), candidates_.end()), candidates_.end());
    for (const auto& p : plan.params) params_[p.name] = p.value;
    llm_limit_ = budget.max_llm_calls.value_or(2 * candidates_.size());
    ctx_.on_llm_call = [this] {
      if (++llm_calls_ > llm_limit_)
        throw TimeoutError(index_, TimeoutError::Reason::llm_calls,
                           "plan exceeded its budget of " + std::to_string(llm_limit_) +
                               " LLM calls at statement " + std::to_string(index_));
    };
  }

  ScoreMap run() {
    if (candidates_.empty()) throw Error("execute_plan needs a non-empty candidate set");
    start_ = Clock::now();
    for (index_ = 0; index_ < plan_.statements.size(); ++index_) {
      if (index_ >= budget_.max_statements)
        throw TimeoutError(index_, TimeoutError::Reason::statements,
                           "plan exceeded its budget of " + std::to_string(budget_.max_statements) +
                               " statements");
      check_clock();
      const auto& st = plan_.statements[index_];
      Value v;
      try {
        v = std::visit([&](const auto& a) { return eval(a); }, st.action);
      } catch (const TimeoutError&) {
        throw;
      } catch (const ToolError&) {
        throw;
      } catch (const std::exception& e) {
        throw ToolError(index_, e.what());
      }
      check_clock();
      if (!st.bind.empty()) env_[st.bind] = std::move(v);
    }
    index_ = plan_.statements.size();
    return score_map(plan_.return_var.name, "return");
  }

 private:
  void check_clock() const {
    if (Clock::now() - start_ > budget_.wall_deadline)
      throw TimeoutError(index_, TimeoutError::Reason::wall_clock,
                         "plan exceeded its " + std::to_string(budget_.wall_deadline.count()) +
                             " ms deadline at statement " + std::to_string(index_));
  }

  const Value& lookup(const std::string& name) const {
    auto it = env_.find(name);
    if (it == env_.end()) throw ToolError(index_, "variable '" + name + "' is not defined");
    return it->second;
  }

  const ScoreMap& score_map(const std::string& name, const char* where) const {
    const auto* m = std::get_if<ScoreMap>(&lookup(name));
    if (!m) throw ToolError(index_, std::string(where) + " needs a score map but '" + name + "' is not one");
    return *m;
  }

  double number(const Expr& e) const {
    switch (e.kind) {
      case Expr::Kind::number: return e.number;
      case Expr::Kind::param: {
        auto it = params_.find(e.name);
        if (it == params_.end()) throw ToolError(index_, "param '" + e.name + "' is not declared");
        return it->second;
      }
      case Expr::Kind::neg: return -number(e.operands[0]);
      case Expr::Kind::add: return number(e.operands[0]) + number(e.operands[1]);
      case Expr::Kind::sub: return number(e.operands[0]) - number(e.operands[1]);
      case Expr::Kind::mul: return number(e.operands[0]) * number(e.operands[1]);
      case Expr::Kind::div: return number(e.operands[0]) / number(e.operands[1]);
    }
    return 0.0;
  }

  double finite(double v, const char* what) const {
    if (!std::isfinite(v)) throw ToolError(index_, std::string("numeric overflow in ") + what);
    return v;
  }

  // Every score map flowing through a plan covers exactly the candidates.
  ScoreMap checked(ScoreMap m, const std::string& what) const {
    if (m.size() != candidates_.size())
      throw ToolError(index_, what + " produced " + std::to_string(m.size()) + " scores for " +
                                  std::to_string(candidates_.size()) + " candidates");
    for (const auto& [id, s] : m) {
      if (!std::binary_search(candidates_.begin(), candidates_.end(), id))
        throw ToolError(index_, what + " scored non-candidate " + to_string(id));
      finite(s, what.c_str());
    }
    return m;
  }

  Value arg(const Arg& a, SemType want) const {
    switch (a.kind) {
      case Arg::Kind::string: return a.text;
      case Arg::Kind::query: return query_;
      case Arg::Kind::number:
        if (want == SemType::id) return EntityId{static_cast<std::uint64_t>(a.number)};
        return a.number;
      case Arg::Kind::candidates: return IdList(candidates_.begin(), candidates_.end());
      case Arg::Kind::ident: {
        if (auto it = env_.find(a.text); it != env_.end()) return it->second;
        if (auto it = params_.find(a.text); it != params_.end()) return it->second;
        throw ToolError(index_, "variable '" + a.text + "' is not defined");
      }
      case Arg::Kind::field: {
        const Value& v = lookup(a.text);
        if (const auto* m = std::get_if<AttrMap>(&v)) {
          auto it = m->find(a.key);
          return it == m->end() ? std::string("NA") : it->second;
        }
        if (const auto* m = std::get_if<RelationMap>(&v)) {
          auto it = m->find(a.key);
          return it == m->end() ? IdList{} : it->second;
        }
        throw ToolError(index_, "'" + a.text + "' cannot be indexed");
      }
      case Arg::Kind::list: {
        if (want == SemType::id_list) {
          IdList out;
          for (const auto& item : a.items) {
            Value v = arg(item, SemType::id);
            if (const auto* id = std::get_if<EntityId>(&v)) out.push_back(*id);
            else throw ToolError(index_, "id list element is not an id");
          }
          return out;
        }
        TextList out;
        for (const auto& item : a.items) {
          Value v = arg(item, SemType::text);
          if (const auto* s = std::get_if<std::string>(&v)) out.push_back(*s);
          else throw ToolError(index_, "text list element is not text");
        }
        return out;
      }
    }
    return {};
  }

  Value eval(const ToolCall& c) {
    const ToolSpec& spec = registry_.spec(c.tool);
    if (spec.params.size() != c.args.size())
      throw ToolError(index_, "'" + c.tool + "' called with the wrong number of arguments");
    std::vector<Value> args;
    for (std::size_t i = 0; i < c.args.size(); ++i) {
      args.push_back(arg(c.args[i], spec.params[i].type));
      if (type_of(args.back()) != spec.params[i].type)
        throw ToolError(index_, "argument '" + spec.params[i].name + "' of '" + c.tool + "' has type " +
                                    to_string(type_of(args.back())));
    }
    Value out = registry_.invoke(c.tool, args, ctx_);
    if (type_of(out) != spec.returns)
      throw ToolError(index_, "'" + c.tool + "' returned a " + to_string(type_of(out)));
    if (auto* m = std::get_if<ScoreMap>(&out)) return checked(std::move(*m), "'" + c.tool + "'");
    return out;
  }

  Value eval(const Combine& c) {
    std::vector<const ScoreMap*> maps;
    for (const auto& v : c.maps) maps.push_back(&score_map(v.name, "combine"));
    std::vector<double> w;
    for (const auto& e : c.weights) w.push_back(finite(number(e), "weight"));
    ScoreMap out;
    for (auto id : candidates_) {
      double acc = c.op == CombineOp::weighted_sum ? 0.0 : c.op == CombineOp::product ? 1.0 : maps[0]->at(id);
      for (std::size_t i = 0; i < maps.size(); ++i) {
        double s = maps[i]->at(id);
        switch (c.op) {
          case CombineOp::weighted_sum: acc += w[i] * s; break;
          case CombineOp::max: acc = std::max(acc, s); break;
          case CombineOp::min: acc = std::min(acc, s); break;
          case CombineOp::product: acc *= s; break;
        }
      }
      out[id] = acc;
    }
    return checked(std::move(out), "combine");
  }

  Value eval(const Normalize& n) { return normalize_scores(score_map(n.input.name, "normalize")); }

  Value eval(const Filter& f) {
    double t = finite(number(f.threshold), "filter threshold");
    ScoreMap out = score_map(f.input.name, "filter");
    for (auto& [id, s] : out) {
      bool keep = f.cmp == FilterCmp::greater ? s > t : s >= t;
      if (!keep) s = 0.0;
    }
    return out;
  }

  Value eval(const Scale& s) {
    double k = finite(number(s.factor), "scale factor");
    ScoreMap out = score_map(s.input.name, "scale");
    for (auto& [id, v] : out) v *= k;
    return checked(std::move(out), "scale");
  }

  Value eval(const Debug& d) {
    if (log_) log_->lines.push_back(d.label + ": " + preview(lookup(d.input.name)));
    return {};
  }

  const Plan& plan_;
  const std::string& query_;
  IdList candidates_;
  const ToolRegistry& registry_;
  const ExecBudget& budget_;
  ExecLog* log_;
  ToolContext ctx_;
  std::map<std::string, double> params_;
  std::map<std::string, Value> env_;
  Clock::time_point start_;
  std::size_t index_ = 0;
  std::size_t llm_calls_ = 0;
  std::size_t llm_limit_ = 0;
};

}  // namespace

ScoreMap execute_plan(const Plan& plan, const std::string& query,
                      std::span<const EntityId> candidates, const KnowledgeBase& kb,
                      const ToolRegistry& registry, Gateway* gateway, const ExecBudget& budget,
                      ExecLog* log) {
  Interpreter in(plan, query, candidates, kb, registry, gateway, budget, log);
  return in.run();
}

}  // namespace kbopt
