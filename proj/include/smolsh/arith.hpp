// arith.hpp: C-style integer arithmetic over 64-bit two's-complement values.
// The expression text is fully expanded before it reaches parse_arithmetic
// (the shell reparses arithmetic at expansion time).

#ifndef SMOLSH_ARITH_HPP
#define SMOLSH_ARITH_HPP

#include <cstdint>
#include <cstring>

#include "smolsh/state.hpp"

namespace smolsh {

struct ArithExpr;
using ArithPtr = std::shared_ptr<const ArithExpr>;

enum class ArithUnOp { Plus, Minus, BitNot, LogNot };
enum class ArithBinOp {
  Mul, Div, Mod, Add, Sub, Shl, Shr, Lt, Le, Gt, Ge, Eq, Ne,
  BitAnd, BitXor, BitOr, LogAnd, LogOr,
};

struct ArithConst { int64_t value; };
struct ArithVar { Str name; };
struct ArithUnary { ArithUnOp op; ArithPtr e; };
struct ArithBinary { ArithBinOp op; ArithPtr lhs, rhs; };
struct ArithTernary { ArithPtr cond, then_e, else_e; };
struct ArithAssign { Str name; std::optional<ArithBinOp> op; ArithPtr e; };  // nullopt: plain =
struct ArithIncDec { Str name; bool prefix; bool increment; };

struct ArithExpr {
  std::variant<ArithConst, ArithVar, ArithUnary, ArithBinary, ArithTernary,
               ArithAssign, ArithIncDec>
      v;
};

template <typename T>
ArithPtr mk_arith(T&& x) {
  return std::make_shared<const ArithExpr>(ArithExpr{std::forward<T>(x)});
}

struct ArithError { Str message; };

// ---------------------------------------------------------------------------
// Parser (recursive descent, C precedence)

namespace arith_detail {

struct Lexer {
  const Str& src;
  size_t pos = 0;

  void skip_ws() {
    while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\n'))
      pos++;
  }
  bool at_end() {
    skip_ws();
    return pos >= src.size();
  }
  bool peek_is(const char* tok) {
    skip_ws();
    size_t n = std::strlen(tok);
    if (src.compare(pos, n, tok) != 0) return false;
    // longest-match guards: don't take "<" when "<=" or "<<" follows, etc.
    char c = tok[n - 1];
    if (pos + n < src.size()) {
      char next = src[pos + n];
      if ((c == '<' || c == '>') && (next == c || next == '=')) return false;
      if ((c == '&' || c == '|') && next == c) return false;
      if ((c == '=' || c == '!' || c == '*' || c == '/' || c == '%' || c == '+' ||
           c == '-' || c == '^') &&
          n == 1 && next == '=')
        return false;
      if (c == '=' && n == 1 && next == '=') return false;
      if ((c == '+' || c == '-') && n == 1 && next == c) return false;
      if (n == 2 && (tok[0] == '<' || tok[0] == '>') && tok[1] == tok[0] && next == '=')
        return false;  // <<= >>=
    }
    return true;
  }
  bool eat(const char* tok) {
    if (!peek_is(tok)) return false;
    pos += std::strlen(tok);
    return true;
  }
  std::optional<Str> eat_name() {
    skip_ws();
    size_t i = pos;
    if (i < src.size() && (std::isalpha(static_cast<unsigned char>(src[i])) || src[i] == '_')) {
      size_t j = i + 1;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        j++;
      Str name = src.substr(i, j - i);
      pos = j;
      return name;
    }
    return std::nullopt;
  }
  std::optional<int64_t> eat_number() {
    skip_ws();
    size_t i = pos;
    if (i >= src.size() || !std::isdigit(static_cast<unsigned char>(src[i])))
      return std::nullopt;
    int base = 10;
    if (src[i] == '0' && i + 1 < src.size() && (src[i + 1] == 'x' || src[i + 1] == 'X')) {
      base = 16;
      i += 2;
    } else if (src[i] == '0') {
      base = 8;
    }
    uint64_t value = 0;
    size_t start = i;
    while (i < src.size()) {
      unsigned char c = src[i];
      int digit;
      if (c >= '0' && c <= '9') digit = c - '0';
      else if (c >= 'a' && c <= 'f') digit = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') digit = c - 'A' + 10;
      else break;
      if (digit >= base) break;
      value = value * base + digit;
      i++;
    }
    if (i == start && base == 16) return std::nullopt;  // "0x" with no digits
    pos = i;
    return static_cast<int64_t>(value);
  }
};

struct Parser {
  Lexer lx;
  Str error;

  ArithPtr fail(const Str& msg) {
    if (error.empty()) error = msg;
    return nullptr;
  }

  // assignment (right assoc): name op= expr | ternary
  ArithPtr parse_assign() {
    size_t save = lx.pos;
    if (auto name = lx.eat_name()) {
      static const std::pair<const char*, std::optional<ArithBinOp>> ops[] = {
          {"<<=", ArithBinOp::Shl}, {">>=", ArithBinOp::Shr}, {"*=", ArithBinOp::Mul},
          {"/=", ArithBinOp::Div},  {"%=", ArithBinOp::Mod},  {"+=", ArithBinOp::Add},
          {"-=", ArithBinOp::Sub},  {"&=", ArithBinOp::BitAnd}, {"^=", ArithBinOp::BitXor},
          {"|=", ArithBinOp::BitOr}, {"=", std::nullopt},
      };
      for (auto& [tok, op] : ops) {
        if (lx.eat(tok)) {
          ArithPtr rhs = parse_assign();
          if (!rhs) return nullptr;
          return mk_arith(ArithAssign{*name, op, rhs});
        }
      }
      lx.pos = save;  // not an assignment; reparse as expression
    }
    return parse_ternary();
  }

  ArithPtr parse_ternary() {
    ArithPtr cond = parse_binary(0);
    if (!cond) return nullptr;
    if (lx.eat("?")) {
      ArithPtr t = parse_assign();
      if (!t) return nullptr;
      if (!lx.eat(":")) return fail("expected ':' in conditional expression");
      ArithPtr f = parse_assign();
      if (!f) return nullptr;
      return mk_arith(ArithTernary{cond, t, f});
    }
    return cond;
  }

  struct BinLevel { const char* tok; ArithBinOp op; };
  static const std::vector<std::vector<BinLevel>>& levels() {
    static const std::vector<std::vector<BinLevel>> lv = {
        {{"||", ArithBinOp::LogOr}},
        {{"&&", ArithBinOp::LogAnd}},
        {{"|", ArithBinOp::BitOr}},
        {{"^", ArithBinOp::BitXor}},
        {{"&", ArithBinOp::BitAnd}},
        {{"==", ArithBinOp::Eq}, {"!=", ArithBinOp::Ne}},
        {{"<=", ArithBinOp::Le}, {">=", ArithBinOp::Ge}, {"<", ArithBinOp::Lt}, {">", ArithBinOp::Gt}},
        {{"<<", ArithBinOp::Shl}, {">>", ArithBinOp::Shr}},
        {{"+", ArithBinOp::Add}, {"-", ArithBinOp::Sub}},
        {{"*", ArithBinOp::Mul}, {"/", ArithBinOp::Div}, {"%", ArithBinOp::Mod}},
    };
    return lv;
  }

  ArithPtr parse_binary(size_t level) {
    if (level >= levels().size()) return parse_unary();
    ArithPtr lhs = parse_binary(level + 1);
    if (!lhs) return nullptr;
    while (true) {
      bool matched = false;
      for (auto& [tok, op] : levels()[level]) {
        if (lx.eat(tok)) {
          ArithPtr rhs = parse_binary(level + 1);
          if (!rhs) return nullptr;
          lhs = mk_arith(ArithBinary{op, lhs, rhs});
          matched = true;
          break;
        }
      }
      if (!matched) return lhs;
    }
  }

  ArithPtr parse_unary() {
    if (lx.eat("++")) {
      auto name = lx.eat_name();
      if (!name) return fail("expected variable after '++'");
      return mk_arith(ArithIncDec{*name, true, true});
    }
    if (lx.eat("--")) {
      auto name = lx.eat_name();
      if (!name) return fail("expected variable after '--'");
      return mk_arith(ArithIncDec{*name, true, false});
    }
    if (lx.eat("+")) {
      ArithPtr e = parse_unary();
      return e ? mk_arith(ArithUnary{ArithUnOp::Plus, e}) : nullptr;
    }
    if (lx.eat("-")) {
      ArithPtr e = parse_unary();
      return e ? mk_arith(ArithUnary{ArithUnOp::Minus, e}) : nullptr;
    }
    if (lx.eat("~")) {
      ArithPtr e = parse_unary();
      return e ? mk_arith(ArithUnary{ArithUnOp::BitNot, e}) : nullptr;
    }
    if (lx.eat("!")) {
      ArithPtr e = parse_unary();
      return e ? mk_arith(ArithUnary{ArithUnOp::LogNot, e}) : nullptr;
    }
    return parse_postfix();
  }

  ArithPtr parse_postfix() {
    if (lx.eat("(")) {
      ArithPtr e = parse_assign();
      if (!e) return nullptr;
      if (!lx.eat(")")) return fail("expected ')'");
      return e;
    }
    if (auto num = lx.eat_number()) return mk_arith(ArithConst{*num});
    if (auto name = lx.eat_name()) {
      if (lx.eat("++")) return mk_arith(ArithIncDec{*name, false, true});
      if (lx.eat("--")) return mk_arith(ArithIncDec{*name, false, false});
      return mk_arith(ArithVar{*name});
    }
    return fail("unexpected token in arithmetic expression");
  }
};

}  // namespace arith_detail

// Parses the fully expanded body of $((...)).
inline std::variant<ArithPtr, ArithError> parse_arithmetic(const Str& src) {
  arith_detail::Parser p{arith_detail::Lexer{src}, {}};
  if (p.lx.at_end()) return ArithError{"empty arithmetic expression"};
  ArithPtr e = p.parse_assign();
  if (!e) return ArithError{p.error.empty() ? "syntax error" : p.error};
  if (!p.lx.at_end())
    return ArithError{"trailing characters in arithmetic expression: '" +
                      src.substr(p.lx.pos) + "'"};
  return e;
}

// ---------------------------------------------------------------------------
// Evaluator

namespace arith_detail {

// Variable values: unset/null read as 0; leading-zero strings parse as octal;
// non-numeric text is an error.
inline std::variant<int64_t, ArithError> read_var(const ShellState& st, const Str& name) {
  auto v = lookup(st, name);
  if (!v || v->empty()) return static_cast<int64_t>(0);
  Str s = *v;
  size_t i = 0, j = s.size();
  while (i < j && (s[i] == ' ' || s[i] == '\t')) i++;
  while (j > i && (s[j - 1] == ' ' || s[j - 1] == '\t')) j--;
  s = s.substr(i, j - i);
  if (s.empty()) return static_cast<int64_t>(0);
  bool neg = false;
  size_t k = 0;
  if (s[k] == '+' || s[k] == '-') {
    neg = s[k] == '-';
    k++;
  }
  Lexer lx{s, k};
  auto num = lx.eat_number();
  if (!num || lx.pos != s.size())
    return ArithError{name + ": not a number: " + *v};
  return neg ? -*num : *num;
}

inline int64_t wrap_shift_count(int64_t n) { return ((n % 64) + 64) % 64; }

}  // namespace arith_detail

// Evaluates e against sigma; assignments write through set_global. && and ||
// short-circuit. Division/modulo by zero and non-numeric variables error.
inline std::variant<int64_t, ArithError> eval_arith(ShellState& st, const ArithPtr& e) {
  using R = std::variant<int64_t, ArithError>;
  struct V {
    ShellState& st;
    R operator()(const ArithConst& c) const { return c.value; }
    R operator()(const ArithVar& v) const { return arith_detail::read_var(st, v.name); }
    R operator()(const ArithUnary& u) const {
      R r = eval_arith(st, u.e);
      if (std::holds_alternative<ArithError>(r)) return r;
      int64_t x = std::get<int64_t>(r);
      switch (u.op) {
        case ArithUnOp::Plus: return x;
        case ArithUnOp::Minus: return static_cast<int64_t>(0) - x;
        case ArithUnOp::BitNot: return ~x;
        case ArithUnOp::LogNot: return static_cast<int64_t>(x == 0 ? 1 : 0);
      }
      return x;
    }
    R operator()(const ArithBinary& b) const {
      if (b.op == ArithBinOp::LogAnd || b.op == ArithBinOp::LogOr) {
        R l = eval_arith(st, b.lhs);
        if (std::holds_alternative<ArithError>(l)) return l;
        int64_t lv = std::get<int64_t>(l);
        if (b.op == ArithBinOp::LogAnd && lv == 0) return static_cast<int64_t>(0);
        if (b.op == ArithBinOp::LogOr && lv != 0) return static_cast<int64_t>(1);
        R r = eval_arith(st, b.rhs);
        if (std::holds_alternative<ArithError>(r)) return r;
        return static_cast<int64_t>(std::get<int64_t>(r) != 0 ? 1 : 0);
      }
      R l = eval_arith(st, b.lhs);
      if (std::holds_alternative<ArithError>(l)) return l;
      R r = eval_arith(st, b.rhs);
      if (std::holds_alternative<ArithError>(r)) return r;
      return apply(b.op, std::get<int64_t>(l), std::get<int64_t>(r));
    }
    R operator()(const ArithTernary& t) const {
      R c = eval_arith(st, t.cond);
      if (std::holds_alternative<ArithError>(c)) return c;
      return eval_arith(st, std::get<int64_t>(c) != 0 ? t.then_e : t.else_e);
    }
    R operator()(const ArithAssign& a) const {
      int64_t value;
      if (a.op) {
        R cur = arith_detail::read_var(st, a.name);
        if (std::holds_alternative<ArithError>(cur)) return cur;
        R rhs = eval_arith(st, a.e);
        if (std::holds_alternative<ArithError>(rhs)) return rhs;
        R combined = apply(*a.op, std::get<int64_t>(cur), std::get<int64_t>(rhs));
        if (std::holds_alternative<ArithError>(combined)) return combined;
        value = std::get<int64_t>(combined);
      } else {
        R rhs = eval_arith(st, a.e);
        if (std::holds_alternative<ArithError>(rhs)) return rhs;
        value = std::get<int64_t>(rhs);
      }
      if (auto err = set_global(st, a.name, std::to_string(value)))
        return ArithError{err->name + ": is read only"};
      return value;
    }
    R operator()(const ArithIncDec& i) const {
      R cur = arith_detail::read_var(st, i.name);
      if (std::holds_alternative<ArithError>(cur)) return cur;
      int64_t old = std::get<int64_t>(cur);
      int64_t next = i.increment ? old + 1 : old - 1;
      if (auto err = set_global(st, i.name, std::to_string(next)))
        return ArithError{err->name + ": is read only"};
      return i.prefix ? next : old;
    }

    static R apply(ArithBinOp op, int64_t a, int64_t b) {
      using U = uint64_t;
      switch (op) {
        case ArithBinOp::Mul: return static_cast<int64_t>(static_cast<U>(a) * static_cast<U>(b));
        case ArithBinOp::Div:
          if (b == 0) return ArithError{"division by zero"};
          if (a == INT64_MIN && b == -1) return a;  // wraps
          return a / b;
        case ArithBinOp::Mod:
          if (b == 0) return ArithError{"division by zero"};
          if (a == INT64_MIN && b == -1) return static_cast<int64_t>(0);
          return a % b;
        case ArithBinOp::Add: return static_cast<int64_t>(static_cast<U>(a) + static_cast<U>(b));
        case ArithBinOp::Sub: return static_cast<int64_t>(static_cast<U>(a) - static_cast<U>(b));
        case ArithBinOp::Shl:
          return static_cast<int64_t>(static_cast<U>(a)
                                      << arith_detail::wrap_shift_count(b));
        case ArithBinOp::Shr: return a >> arith_detail::wrap_shift_count(b);  // arithmetic
        case ArithBinOp::Lt: return static_cast<int64_t>(a < b);
        case ArithBinOp::Le: return static_cast<int64_t>(a <= b);
        case ArithBinOp::Gt: return static_cast<int64_t>(a > b);
        case ArithBinOp::Ge: return static_cast<int64_t>(a >= b);
        case ArithBinOp::Eq: return static_cast<int64_t>(a == b);
        case ArithBinOp::Ne: return static_cast<int64_t>(a != b);
        case ArithBinOp::BitAnd: return a & b;
        case ArithBinOp::BitXor: return a ^ b;
        case ArithBinOp::BitOr: return a | b;
        default: return static_cast<int64_t>(0);
      }
    }
  };
  return std::visit(V{st}, e->v);
}

}  // namespace smolsh

#endif  // SMOLSH_ARITH_HPP
