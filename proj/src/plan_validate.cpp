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
#include <optional>
#include <set>

#include "kbopt/plan.hpp"

namespace kbopt {

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::UnknownTool: return "UnknownTool";
    case ViolationKind::ArityMismatch: return "ArityMismatch";
    case ViolationKind::TypeMismatch: return "TypeMismatch";
    case ViolationKind::UndefinedVar: return "UndefinedVar";
    case ViolationKind::BadReturn: return "BadReturn";
    case ViolationKind::EmptyPlan: return "EmptyPlan";
    case ViolationKind::DuplicateName: return "DuplicateName";
  }
  return "?";
}

std::string to_string(const Violation& v) {
  return to_string(v.kind) + " at statement " + std::to_string(v.statement) + ": " + v.message;
}

namespace {

bool is_index(double v) { return v >= 0.0 && v == std::floor(v) && v < 9.0e15; }

class Checker {
 public:
  Checker(const Plan& plan, const ToolRegistry& registry, const KbSchema& schema)
      : plan_(plan), registry_(registry), schema_(schema) {}

  std::vector<Violation> run() {
    for (const auto& p : plan_.params) {
      if (!params_.insert(p.name).second)
        add(ViolationKind::DuplicateName, 0, "param '" + p.name + "' is declared twice");
    }
    bool any_work = false;
    for (std::size_t i = 0; i < plan_.statements.size(); ++i) {
      const auto& st = plan_.statements[i];
      index_ = i;
      if (!std::holds_alternative<Debug>(st.action)) any_work = true;
      std::optional<SemType> result = std::visit([&](const auto& a) { return check(a); }, st.action);
      if (st.bind.empty()) continue;
      if (params_.count(st.bind) || vars_.count(st.bind) || poisoned_.count(st.bind)) {
        add(ViolationKind::DuplicateName, i, "variable '" + st.bind + "' is already defined");
        poisoned_.insert(st.bind);
        continue;
      }
      if (result) vars_[st.bind] = *result;
      else poisoned_.insert(st.bind);
    }
    if (!any_work) add(ViolationKind::EmptyPlan, 0, "plan has no statements");
    index_ = plan_.statements.size();
    const auto& r = plan_.return_var.name;
    if (poisoned_.count(r)) return std::move(out_);
    auto it = vars_.find(r);
    if (it == vars_.end()) {
      add(ViolationKind::UndefinedVar, index_, "returned variable '" + r + "' is not defined");
    } else if (it->second != SemType::map) {
      add(ViolationKind::BadReturn, index_,
          "returned variable '" + r + "' is a " + to_string(it->second) + ", not a score map");
    }
    return std::move(out_);
  }

 private:
  void add(ViolationKind kind, std::size_t at, std::string message) {
    out_.push_back({kind, at, std::move(message)});
  }

  // nullopt: unknown (undefined or poisoned); undefined is reported here.
  std::optional<SemType> var_type(const std::string& name) {
    if (auto it = vars_.find(name); it != vars_.end()) return it->second;
    if (params_.count(name)) return SemType::number;
    if (!poisoned_.count(name))
      add(ViolationKind::UndefinedVar, index_, "variable '" + name + "' is not defined");
    return std::nullopt;
  }

  void require_map(const VarRef& v, const std::string& where) {
    auto t = var_type(v.name);
    if (t && *t != SemType::map)
      add(ViolationKind::TypeMismatch, index_,
          where + " needs a score map but '" + v.name + "' is a " + to_string(*t));
  }

  void check_expr(const Expr& e) {
    if (e.kind == Expr::Kind::param) {
      if (!params_.count(e.name))
        add(ViolationKind::UndefinedVar, index_, "param '" + e.name + "' is not declared");
      return;
    }
    for (const auto& o : e.operands) check_expr(o);
  }

  // Type of an argument when checked against `want`; nullopt when unknowable.
  std::optional<SemType> arg_type(const Arg& a, SemType want) {
    switch (a.kind) {
      case Arg::Kind::string:
      case Arg::Kind::query: return SemType::text;
      case Arg::Kind::number:
        if (want == SemType::id && is_index(a.number)) return SemType::id;
        return SemType::number;
      case Arg::Kind::candidates: return SemType::id_list;
      case Arg::Kind::ident: return var_type(a.text);
      case Arg::Kind::field: {
        auto t = var_type(a.text);
        if (!t) return std::nullopt;
        if (*t == SemType::attr_map) return SemType::text;
        if (*t == SemType::relation_map) return SemType::id_list;
        add(ViolationKind::TypeMismatch, index_,
            "'" + a.text + "[\"" + a.key + "\"]' indexes a " + to_string(*t));
        return std::nullopt;
      }
      case Arg::Kind::list: {
        SemType elem;
        if (want == SemType::text_list) elem = SemType::text;
        else if (want == SemType::id_list) elem = SemType::id;
        else return SemType::text_list;  // mismatch reported by the caller
        bool known = true;
        for (const auto& item : a.items) {
          if (item.kind == Arg::Kind::list) {
            add(ViolationKind::TypeMismatch, index_, "nested lists are not allowed");
            known = false;
            continue;
          }
          auto t = arg_type(item, elem);
          if (!t) {
            known = false;
          } else if (*t != elem) {
            add(ViolationKind::TypeMismatch, index_,
                "list element of type " + to_string(*t) + " where " + to_string(elem) + " is expected");
            known = false;
          }
        }
        return known ? std::optional<SemType>(want) : std::nullopt;
      }
    }
    return std::nullopt;
  }

  std::optional<SemType> check(const ToolCall& c) {
    const ToolSpec* spec = registry_.find(c.tool);
    if (!spec) {
      add(ViolationKind::UnknownTool, index_, "unknown tool '" + c.tool + "'");
      // still flag undefined references in its arguments
      for (const auto& a : c.args) arg_type(a, SemType::text);
      return std::nullopt;
    }
    if (c.args.size() != spec->params.size()) {
      add(ViolationKind::ArityMismatch, index_,
          "'" + c.tool + "' takes " + std::to_string(spec->params.size()) + " argument(s), got " +
              std::to_string(c.args.size()));
      return spec->returns;
    }
    for (std::size_t i = 0; i < c.args.size(); ++i) {
      const auto& p = spec->params[i];
      const auto& a = c.args[i];
      auto t = arg_type(a, p.type);
      if (t && *t != p.type) {
        add(ViolationKind::TypeMismatch, index_,
            "argument '" + p.name + "' of '" + c.tool + "' must be " + to_string(p.type) + ", got " +
                to_string(*t));
        continue;
      }
      // a score map is only well-formed over the candidate set
      if (spec->returns == SemType::map && p.type == SemType::id_list && a.kind != Arg::Kind::candidates)
        add(ViolationKind::TypeMismatch, index_,
            "argument '" + p.name + "' of '" + c.tool + "' must be 'candidates'");
      if (spec->impl == "entity_ids_by_type" && a.kind == Arg::Kind::string &&
          std::find(schema_.entity_types.begin(), schema_.entity_types.end(), a.text) ==
              schema_.entity_types.end())
        add(ViolationKind::TypeMismatch, index_, "'" + a.text + "' is not an entity type of the schema");
    }
    return spec->returns;
  }

  std::optional<SemType> check(const Combine& c) {
    const char* name = c.op == CombineOp::weighted_sum ? "weighted_sum"
                       : c.op == CombineOp::max        ? "max"
                       : c.op == CombineOp::min        ? "min"
                                                       : "product";
    if (c.maps.empty()) add(ViolationKind::ArityMismatch, index_, std::string(name) + " needs at least one map");
    for (const auto& m : c.maps) require_map(m, name);
    if (c.op == CombineOp::weighted_sum && c.maps.size() != c.weights.size())
      add(ViolationKind::ArityMismatch, index_,
          "weighted_sum has " + std::to_string(c.maps.size()) + " map(s) but " +
              std::to_string(c.weights.size()) + " weight(s)");
    for (const auto& w : c.weights) check_expr(w);
    return SemType::map;
  }

  std::optional<SemType> check(const Normalize& n) {
    require_map(n.input, "normalize");
    return SemType::map;
  }

  std::optional<SemType> check(const Filter& f) {
    require_map(f.input, "filter");
    check_expr(f.threshold);
    return SemType::map;
  }

  std::optional<SemType> check(const Scale& s) {
    require_map(s.input, "scale");
    check_expr(s.factor);
    return SemType::map;
  }

  std::optional<SemType> check(const Debug& d) {
    var_type(d.input.name);
    return std::nullopt;
  }

  const Plan& plan_;
  const ToolRegistry& registry_;
  const KbSchema& schema_;
  std::set<std::string> params_;
  std::map<std::string, SemType> vars_;
  std::set<std::string> poisoned_;
  std::size_t index_ = 0;
  std::vector<Violation> out_;
};

}  // namespace

std::vector<Violation> validate_plan(const Plan& plan, const ToolRegistry& registry,
                                     const KbSchema& schema) {
  return Checker(plan, registry, schema).run();
}

}  // namespace kbopt
