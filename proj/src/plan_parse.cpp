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

#include <charconv>
#include <cmath>
#include <set>

#include "kbopt/plan.hpp"
#include "kbopt/text.hpp"

namespace kbopt {

Expr Expr::literal(double v, Span s) {
  Expr e;
  e.kind = Kind::number;
  e.number = v;
  e.span = s;
  return e;
}

Expr Expr::param(std::string n, Span s) {
  Expr e;
  e.kind = Kind::param;
  e.name = std::move(n);
  e.span = s;
  return e;
}

Expr Expr::unary_neg(Expr x, Span s) {
  Expr e;
  e.kind = Kind::neg;
  e.operands.push_back(std::move(x));
  e.span = s;
  return e;
}

Expr Expr::binary(Kind k, Expr lhs, Expr rhs, Span s) {
  Expr e;
  e.kind = k;
  e.operands.push_back(std::move(lhs));
  e.operands.push_back(std::move(rhs));
  e.span = s;
  return e;
}

namespace {

std::string join_expected(const std::vector<std::string>& expected) {
  std::string out;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i) out += i + 1 == expected.size() ? " or " : ", ";
    out += expected[i];
  }
  return out;
}

}  // namespace

PlanSyntaxError::PlanSyntaxError(int line, int column, std::vector<std::string> expected,
                                 const std::string& found)
    : Error("plan syntax error at line " + std::to_string(line) + ", column " +
            std::to_string(column) + ": expected " + join_expected(expected) + ", found " + found),
      line_(line),
      column_(column),
      expected_(std::move(expected)) {}

namespace {

enum class Tok {
  ident, number, string, lparen, rparen, lbracket, rbracket, comma, assign,
  sep, plus, minus, star, slash, gt, ge, end,
};

struct Token {
  Tok kind;
  std::string text;  // identifier name, string value, or number source
  double number = 0.0;
  Span span;
};

// Words with fixed meaning; none may be bound as a variable or param.
// idf_weight is held back for a future combinator.
const std::set<std::string, std::less<>> kKeywords = {
    "param", "let", "return", "debug", "query", "candidates", "weighted_sum",
    "max", "min", "product", "normalize", "filter", "scale", "idf_weight",
};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::ident: return "'" + t.text + "'";
    case Tok::number: return "number " + t.text;
    case Tok::string: return "string literal";
    case Tok::sep: return "end of statement";
    case Tok::end: return "end of input";
    default: return "'" + t.text + "'";
  }
}

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    int depth = 0;
    while (true) {
      skip_blanks();
      Span at{line_, col_};
      if (pos_ >= src_.size()) {
        out.push_back({Tok::end, "", 0.0, at});
        return out;
      }
      char c = src_[pos_];
      if (c == '\n' || c == ';') {
        advance();
        // newlines inside brackets are layout only
        if (c == ';' || depth == 0) out.push_back({Tok::sep, c == ';' ? ";" : "\\n", 0.0, at});
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string id;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
          id.push_back(advance());
        out.push_back({Tok::ident, id, 0.0, at});
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        out.push_back(number(at));
        continue;
      }
      if (c == '"') {
        out.push_back(string_literal(at));
        continue;
      }
      advance();
      switch (c) {
        case '(': ++depth; out.push_back({Tok::lparen, "(", 0.0, at}); break;
        case ')': --depth; out.push_back({Tok::rparen, ")", 0.0, at}); break;
        case '[': ++depth; out.push_back({Tok::lbracket, "[", 0.0, at}); break;
        case ']': --depth; out.push_back({Tok::rbracket, "]", 0.0, at}); break;
        case ',': out.push_back({Tok::comma, ",", 0.0, at}); break;
        case '=': out.push_back({Tok::assign, "=", 0.0, at}); break;
        case '+': out.push_back({Tok::plus, "+", 0.0, at}); break;
        case '-': out.push_back({Tok::minus, "-", 0.0, at}); break;
        case '*': out.push_back({Tok::star, "*", 0.0, at}); break;
        case '/': out.push_back({Tok::slash, "/", 0.0, at}); break;
        case '>':
          if (pos_ < src_.size() && src_[pos_] == '=') {
            advance();
            out.push_back({Tok::ge, ">=", 0.0, at});
          } else {
            out.push_back({Tok::gt, ">", 0.0, at});
          }
          break;
        default:
          throw PlanSyntaxError(at.line, at.column, {"a token"},
                                std::string("character '") + c + "'");
      }
    }
  }

 private:
  char advance() {
    char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_blanks() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  Token number(Span at) {
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      advance();
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
      if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
        throw PlanSyntaxError(line_, col_, {"exponent digits"}, "'" + src_.substr(start, pos_ - start) + "'");
      digits();
    }
    std::string s = src_.substr(start, pos_ - start);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
      throw PlanSyntaxError(at.line, at.column, {"a finite number"}, "'" + s + "'");
    return {Tok::number, s, v, at};
  }

  Token string_literal(Span at) {
    advance();  // opening quote
    std::string v;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n')
        throw PlanSyntaxError(line_, col_, {"'\"'"}, "unterminated string");
      char c = advance();
      if (c == '"') break;
      if (c == '\\') {
        if (pos_ >= src_.size()) throw PlanSyntaxError(line_, col_, {"escape character"}, "end of input");
        char e = advance();
        if (e == 'n') v.push_back('\n');
        else if (e == 't') v.push_back('\t');
        else if (e == '"' || e == '\\') v.push_back(e);
        else throw PlanSyntaxError(line_, col_ - 1, {"'\\\"'", "'\\\\'", "'\\n'", "'\\t'"},
                                   std::string("'\\") + e + "'");
      } else {
        v.push_back(c);
      }
    }
    return {Tok::string, v, 0.0, at};
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Plan run() {
    Plan plan;
    bool returned = false;
    skip_seps();
    while (peek().kind != Tok::end) {
      if (returned) fail({"end of input"});
      if (is_word("param")) {
        plan.params.push_back(param());
      } else if (is_word("let")) {
        plan.statements.push_back(let());
      } else if (is_word("debug")) {
        plan.statements.push_back(debug());
      } else if (is_word("return")) {
        next();
        plan.return_var = var_ref();
        returned = true;
      } else {
        fail({"'param'", "'let'", "'debug'", "'return'"});
      }
      if (peek().kind != Tok::end && peek().kind != Tok::sep) fail({"end of statement"});
      skip_seps();
    }
    if (!returned) fail({"'return'"});
    return plan;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }
  bool is_word(std::string_view w) const { return peek().kind == Tok::ident && peek().text == w; }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    const Token& t = peek();
    throw PlanSyntaxError(t.span.line, t.span.column, std::move(expected), describe(t));
  }

  const Token& expect(Tok kind, const char* what) {
    if (peek().kind != kind) fail({what});
    return next();
  }

  void skip_seps() {
    while (peek().kind == Tok::sep) next();
  }

  std::string binding_name() {
    if (peek().kind != Tok::ident || kKeywords.count(peek().text)) fail({"an identifier"});
    return next().text;
  }

  VarRef var_ref() {
    Span s = peek().span;
    return {binding_name(), s};
  }

  double signed_number() {
    bool neg = false;
    if (peek().kind == Tok::minus) {
      next();
      neg = true;
    }
    double v = expect(Tok::number, "a number").number;
    return neg ? -v : v;
  }

  Param param() {
    Span s = next().span;
    Param p;
    p.name = binding_name();
    p.span = s;
    expect(Tok::assign, "'='");
    p.value = signed_number();
    return p;
  }

  Statement debug() {
    Statement st;
    st.span = next().span;
    expect(Tok::lparen, "'('");
    Debug d;
    d.label = expect(Tok::string, "a string literal").text;
    expect(Tok::comma, "','");
    d.input = var_ref();
    expect(Tok::rparen, "')'");
    st.action = std::move(d);
    return st;
  }

  std::vector<VarRef> var_list() {
    std::vector<VarRef> out;
    expect(Tok::lbracket, "'['");
    if (peek().kind != Tok::rbracket) {
      out.push_back(var_ref());
      while (peek().kind == Tok::comma) {
        next();
        out.push_back(var_ref());
      }
    }
    expect(Tok::rbracket, "']'");
    return out;
  }

  Statement let() {
    Statement st;
    st.span = next().span;
    st.bind = binding_name();
    expect(Tok::assign, "'='");
    if (peek().kind != Tok::ident) fail({"a tool name or combinator"});
    const std::string head = peek().text;
    if (head == "idf_weight") fail({"a tool name or combinator"});
    next();
    expect(Tok::lparen, "'('");
    if (head == "weighted_sum") {
      Combine c;
      c.op = CombineOp::weighted_sum;
      c.maps = var_list();
      expect(Tok::comma, "','");
      expect(Tok::lbracket, "'['");
      if (peek().kind != Tok::rbracket) {
        c.weights.push_back(expr());
        while (peek().kind == Tok::comma) {
          next();
          c.weights.push_back(expr());
        }
      }
      expect(Tok::rbracket, "']'");
      st.action = std::move(c);
    } else if (head == "max" || head == "min" || head == "product") {
      Combine c;
      c.op = head == "max" ? CombineOp::max : head == "min" ? CombineOp::min : CombineOp::product;
      c.maps = var_list();
      st.action = std::move(c);
    } else if (head == "normalize") {
      st.action = Normalize{var_ref()};
    } else if (head == "filter") {
      Filter f;
      f.input = var_ref();
      expect(Tok::comma, "','");
      if (peek().kind == Tok::gt) f.cmp = FilterCmp::greater;
      else if (peek().kind == Tok::ge) f.cmp = FilterCmp::greater_equal;
      else fail({"'>'", "'>='"});
      next();
      f.threshold = expr();
      st.action = std::move(f);
    } else if (head == "scale") {
      Scale sc;
      sc.input = var_ref();
      expect(Tok::comma, "','");
      sc.factor = expr();
      st.action = std::move(sc);
    } else if (kKeywords.count(head)) {
      throw PlanSyntaxError(st.span.line, st.span.column, {"a tool name or combinator"},
                            "keyword '" + head + "'");
    } else {
      ToolCall call;
      call.tool = head;
      if (peek().kind != Tok::rparen) {
        call.args.push_back(arg());
        while (peek().kind == Tok::comma) {
          next();
          call.args.push_back(arg());
        }
      }
      st.action = std::move(call);
    }
    expect(Tok::rparen, "')'");
    return st;
  }

  Arg arg() {
    Arg a;
    a.span = peek().span;
    switch (peek().kind) {
      case Tok::string:
        a.kind = Arg::Kind::string;
        a.text = next().text;
        return a;
      case Tok::number:
      case Tok::minus:
        a.kind = Arg::Kind::number;
        a.number = signed_number();
        return a;
      case Tok::lbracket:
        next();
        a.kind = Arg::Kind::list;
        if (peek().kind != Tok::rbracket) {
          a.items.push_back(arg());
          while (peek().kind == Tok::comma) {
            next();
            a.items.push_back(arg());
          }
        }
        expect(Tok::rbracket, "']'");
        return a;
      case Tok::ident:
        if (is_word("query")) {
          next();
          a.kind = Arg::Kind::query;
          return a;
        }
        if (is_word("candidates")) {
          next();
          a.kind = Arg::Kind::candidates;
          return a;
        }
        a.text = binding_name();
        a.kind = Arg::Kind::ident;
        if (peek().kind == Tok::lbracket) {
          next();
          a.kind = Arg::Kind::field;
          a.key = expect(Tok::string, "a string literal").text;
          expect(Tok::rbracket, "']'");
        }
        return a;
      default:
        fail({"a string literal", "a number", "'query'", "'candidates'", "an identifier", "'['"});
    }
  }

  Expr expr() {
    Expr lhs = term();
    while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
      const Token& op = next();
      Expr rhs = term();
      lhs = Expr::binary(op.kind == Tok::plus ? Expr::Kind::add : Expr::Kind::sub, std::move(lhs),
                         std::move(rhs), op.span);
    }
    return lhs;
  }

  Expr term() {
    Expr lhs = unary();
    while (peek().kind == Tok::star || peek().kind == Tok::slash) {
      const Token& op = next();
      Expr rhs = unary();
      lhs = Expr::binary(op.kind == Tok::star ? Expr::Kind::mul : Expr::Kind::div, std::move(lhs),
                         std::move(rhs), op.span);
    }
    return lhs;
  }

  Expr unary() {
    if (peek().kind == Tok::minus) {
      Span s = next().span;
      // "-0.5" is a negative literal, "-w" and "-(...)" are negations
      if (peek().kind == Tok::number) return Expr::literal(-next().number, s);
      return Expr::unary_neg(unary(), s);
    }
    return primary();
  }

  Expr primary() {
    const Token& t = peek();
    if (t.kind == Tok::number) {
      next();
      return Expr::literal(t.number, t.span);
    }
    if (t.kind == Tok::ident && !kKeywords.count(t.text)) {
      next();
      return Expr::param(t.text, t.span);
    }
    if (t.kind == Tok::lparen) {
      next();
      Expr e = expr();
      expect(Tok::rparen, "')'");
      return e;
    }
    fail({"a number", "a param name", "'('", "'-'"});
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------

int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::add:
    case Expr::Kind::sub: return 1;
    case Expr::Kind::mul:
    case Expr::Kind::div: return 2;
    case Expr::Kind::neg: return 3;
    default: return 4;
  }
}

std::string render_expr(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::number: return text::format_number(e.number);
    case Expr::Kind::param: return e.name;
    case Expr::Kind::neg: {
      const Expr& x = e.operands[0];
      if (x.kind == Expr::Kind::param) return "-" + x.name;
      return "-(" + render_expr(x) + ")";
    }
    default: break;
  }
  const char* op = e.kind == Expr::Kind::add ? " + "
                   : e.kind == Expr::Kind::sub ? " - "
                   : e.kind == Expr::Kind::mul ? " * "
                                               : " / ";
  int p = precedence(e);
  std::string l = render_expr(e.operands[0]);
  std::string r = render_expr(e.operands[1]);
  if (precedence(e.operands[0]) < p) l = "(" + l + ")";
  if (precedence(e.operands[1]) <= p) r = "(" + r + ")";
  return l + op + r;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\', out += c;
    else if (c == '\n') out += "\\n";
    else if (c == '\t') out += "\\t";
    else out += c;
  }
  return out + "\"";
}

std::string render_arg(const Arg& a) {
  switch (a.kind) {
    case Arg::Kind::string: return quote(a.text);
    case Arg::Kind::number: return text::format_number(a.number);
    case Arg::Kind::query: return "query";
    case Arg::Kind::candidates: return "candidates";
    case Arg::Kind::ident: return a.text;
    case Arg::Kind::field: return a.text + "[" + quote(a.key) + "]";
    case Arg::Kind::list: {
      std::string out = "[";
      for (std::size_t i = 0; i < a.items.size(); ++i) out += (i ? ", " : "") + render_arg(a.items[i]);
      return out + "]";
    }
  }
  return {};
}

std::string render_vars(const std::vector<VarRef>& vs) {
  std::string out = "[";
  for (std::size_t i = 0; i < vs.size(); ++i) out += (i ? ", " : "") + vs[i].name;
  return out + "]";
}

struct ActionRenderer {
  std::string operator()(const ToolCall& c) const {
    std::string out = c.tool + "(";
    for (std::size_t i = 0; i < c.args.size(); ++i) out += (i ? ", " : "") + render_arg(c.args[i]);
    return out + ")";
  }
  std::string operator()(const Combine& c) const {
    switch (c.op) {
      case CombineOp::weighted_sum: {
        std::string w = "[";
        for (std::size_t i = 0; i < c.weights.size(); ++i) w += (i ? ", " : "") + render_expr(c.weights[i]);
        return "weighted_sum(" + render_vars(c.maps) + ", " + w + "])";
      }
      case CombineOp::max: return "max(" + render_vars(c.maps) + ")";
      case CombineOp::min: return "min(" + render_vars(c.maps) + ")";
      case CombineOp::product: return "product(" + render_vars(c.maps) + ")";
    }
    return {};
  }
  std::string operator()(const Normalize& n) const { return "normalize(" + n.input.name + ")"; }
  std::string operator()(const Filter& f) const {
    return "filter(" + f.input.name + (f.cmp == FilterCmp::greater ? ", > " : ", >= ") +
           render_expr(f.threshold) + ")";
  }
  std::string operator()(const Scale& s) const {
    return "scale(" + s.input.name + ", " + render_expr(s.factor) + ")";
  }
  std::string operator()(const Debug& d) const {
    return "debug(" + quote(d.label) + ", " + d.input.name + ")";
  }
};

}  // namespace

Plan parse_plan(const std::string& source) {
  return Parser(Lexer(source).run()).run();
}

std::string render_plan(const Plan& plan) {
  std::string out;
  for (const auto& p : plan.params) out += "param " + p.name + " = " + text::format_number(p.value) + "\n";
  for (const auto& st : plan.statements) {
    if (std::holds_alternative<Debug>(st.action))
      out += std::visit(ActionRenderer{}, st.action) + "\n";
    else
      out += "let " + st.bind + " = " + std::visit(ActionRenderer{}, st.action) + "\n";
  }
  out += "return " + plan.return_var.name + "\n";
  return out;
}

}  // namespace kbopt
