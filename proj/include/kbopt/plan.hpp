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

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kbopt/tools.hpp"

namespace kbopt {

// Source position (1-based). Spans are metadata: they never take part in
// structural equality, so parse(render(p)) == p holds.
struct Span {
  int line = 0;
  int column = 0;

  friend bool operator==(const Span&, const Span&) { return true; }
};

// Arithmetic over params and literals, used for weights and thresholds.
struct Expr {
  enum class Kind { number, param, add, sub, mul, div, neg };

  Kind kind = Kind::number;
  double number = 0.0;
  std::string name;
  std::vector<Expr> operands;
  Span span;

  static Expr literal(double v, Span s = {});
  static Expr param(std::string n, Span s = {});
  static Expr unary_neg(Expr e, Span s = {});
  static Expr binary(Kind k, Expr lhs, Expr rhs, Span s = {});

  friend bool operator==(const Expr&, const Expr&) = default;
};

struct Arg {
  enum class Kind { string, number, query, candidates, ident, field, list };

  Kind kind = Kind::string;
  std::string text;  // string value, identifier, or the map variable of a field access
  std::string key;   // field access key
  double number = 0.0;
  std::vector<Arg> items;
  Span span;

  friend bool operator==(const Arg&, const Arg&) = default;
};

struct VarRef {
  std::string name;
  Span span;

  friend bool operator==(const VarRef&, const VarRef&) = default;
};

struct ToolCall {
  std::string tool;
  std::vector<Arg> args;

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

enum class CombineOp { weighted_sum, max, min, product };

struct Combine {
  CombineOp op = CombineOp::weighted_sum;
  std::vector<VarRef> maps;
  std::vector<Expr> weights;  // weighted_sum only

  friend bool operator==(const Combine&, const Combine&) = default;
};

struct Normalize {
  VarRef input;

  friend bool operator==(const Normalize&, const Normalize&) = default;
};

enum class FilterCmp { greater, greater_equal };

// Entries failing the comparison are set to 0; keys are never dropped.
struct Filter {
  VarRef input;
  FilterCmp cmp = FilterCmp::greater_equal;
  Expr threshold;

  friend bool operator==(const Filter&, const Filter&) = default;
};

struct Scale {
  VarRef input;
  Expr factor;

  friend bool operator==(const Scale&, const Scale&) = default;
};

// Writes a labelled rendering of a variable to the execution log.
struct Debug {
  std::string label;
  VarRef input;

  friend bool operator==(const Debug&, const Debug&) = default;
};

using Action = std::variant<ToolCall, Combine, Normalize, Filter, Scale, Debug>;

struct Statement {
  std::string bind;  // empty for debug
  Action action;
  Span span;

  friend bool operator==(const Statement&, const Statement&) = default;
};

struct Param {
  std::string name;
  double value = 0.0;
  Span span;

  friend bool operator==(const Param&, const Param&) = default;
};

struct Plan {
  std::vector<Param> params;
  std::vector<Statement> statements;
  VarRef return_var;

  friend bool operator==(const Plan&, const Plan&) = default;
};

class PlanSyntaxError : public Error {
 public:
  PlanSyntaxError(int line, int column, std::vector<std::string> expected, const std::string& found);
  int line() const { return line_; }
  int column() const { return column_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  int line_;
  int column_;
  std::vector<std::string> expected_;
};

Plan parse_plan(const std::string& source);
std::string render_plan(const Plan& plan);

// ---------------------------------------------------------------------------

enum class ViolationKind {
  UnknownTool,
  ArityMismatch,
  TypeMismatch,
  UndefinedVar,
  BadReturn,
  EmptyPlan,
  DuplicateName,
};

std::string to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::size_t statement = 0;  // statements.size() for the return
  std::string message;
};

std::string to_string(const Violation& v);

// Empty iff every tool exists with matching arity and types, every variable
// is defined before use, and the returned variable is a score map over the
// candidate set.
std::vector<Violation> validate_plan(const Plan& plan, const ToolRegistry& registry,
                                     const KbSchema& schema);

// ---------------------------------------------------------------------------

struct ExecBudget {
  std::chrono::milliseconds wall_deadline{5000};
  std::optional<std::size_t> max_llm_calls;  // unset: 2 x |candidates|
  std::size_t max_statements = 64;
};

class TimeoutError : public Error {
 public:
  enum class Reason { wall_clock, llm_calls, statements };

  TimeoutError(std::size_t statement, Reason reason, const std::string& what);
  std::size_t statement() const { return statement_; }
  Reason reason() const { return reason_; }

 private:
  std::size_t statement_;
  Reason reason_;
};

class ToolError : public Error {
 public:
  ToolError(std::size_t statement, const std::string& what);
  std::size_t statement() const { return statement_; }

 private:
  std::size_t statement_;
};

struct ExecLog {
  std::vector<std::string> lines;
};

// Runs a validator-clean plan. Statements run strictly in order; the result
// has exactly the candidate key set.
ScoreMap execute_plan(const Plan& plan, const std::string& query,
                      std::span<const EntityId> candidates, const KnowledgeBase& kb,
                      const ToolRegistry& registry, Gateway* gateway, const ExecBudget& budget,
                      ExecLog* log = nullptr);

// Affine map onto [0, 1]; a constant map becomes all 0.5.
ScoreMap normalize_scores(const ScoreMap& m);

}  // namespace kbopt
