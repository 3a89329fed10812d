#pragma once

// Immutable symbolic expressions over the state variables of a system:
// parsing, evaluation, exact differentiation and light simplification.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geoctrl/error.hpp"

namespace geoctrl {

enum class Op : std::uint8_t {
  kConst,
  kVar,
  // unary
  kNeg,
  kSin,
  kCos,
  kTan,
  kExp,
  kLn,
  kSqrt,
  kTanh,
  // binary
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
};

inline bool IsUnary(Op op) { return op >= Op::kNeg && op <= Op::kTanh; }
inline bool IsBinary(Op op) { return op >= Op::kAdd; }

inline const char* FunctionName(Op op) {
  switch (op) {
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kTan: return "tan";
    case Op::kExp: return "exp";
    case Op::kLn: return "ln";
    case Op::kSqrt: return "sqrt";
    case Op::kTanh: return "tanh";
    default: return "";
  }
}

namespace detail {

[[noreturn]] inline void ThrowDomain(const char* what) {
  throw Error(ErrorCode::kDomain, std::string("domain error: ") + what);
}

inline double ApplyUnary(Op op, double a) {
  switch (op) {
    case Op::kNeg: return -a;
    case Op::kSin: return std::sin(a);
    case Op::kCos: return std::cos(a);
    case Op::kTan: return std::tan(a);
    case Op::kExp: return std::exp(a);
    case Op::kLn:
      if (!(a > 0.0)) ThrowDomain("ln of a nonpositive value");
      return std::log(a);
    case Op::kSqrt:
      if (a < 0.0) ThrowDomain("sqrt of a negative value");
      return std::sqrt(a);
    case Op::kTanh: return std::tanh(a);
    default: break;
  }
  ThrowDomain("not a unary operator");
}

inline double ApplyBinary(Op op, double a, double b) {
  switch (op) {
    case Op::kAdd: return a + b;
    case Op::kSub: return a - b;
    case Op::kMul: return a * b;
    case Op::kDiv:
      if (b == 0.0) ThrowDomain("division by zero");
      return a / b;
    case Op::kPow:
      if (a < 0.0 && b != std::floor(b)) {
        ThrowDomain("non-integer power of a negative value");
      }
      if (a == 0.0 && b < 0.0) ThrowDomain("negative power of zero");
      return std::pow(a, b);
    default: break;
  }
  ThrowDomain("not a binary operator");
}

}  // namespace detail

/// A shared, immutable expression tree. Copies are cheap and safe to share
/// across threads.
class Expr {
 public:
  Expr() : Expr(Constant(0.0)) {}

  static Expr Constant(double value) {
    auto node = std::make_shared<Node>();
    node->op = Op::kConst;
    node->value = value;
    return Expr(std::move(node));
  }

  static Expr Variable(int index) {
    auto node = std::make_shared<Node>();
    node->op = Op::kVar;
    node->var = index;
    return Expr(std::move(node));
  }

  static Expr Unary(Op op, Expr arg) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->children[0] = std::move(arg.node_);
    return Expr(std::move(node));
  }

  static Expr Binary(Op op, Expr lhs, Expr rhs) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->children[0] = std::move(lhs.node_);
    node->children[1] = std::move(rhs.node_);
    return Expr(std::move(node));
  }

  Op op() const { return node_->op; }
  double value() const { return node_->value; }
  int var() const { return node_->var; }
  Expr arg(int i) const { return Expr(node_->children[i]); }

  bool is_constant() const { return op() == Op::kConst; }
  bool is_constant(double v) const { return is_constant() && value() == v; }

  /// Largest variable index referenced, or -1 for a closed expression.
  int max_var() const {
    switch (op()) {
      case Op::kConst: return -1;
      case Op::kVar: return var();
      default: break;
    }
    int m = arg(0).max_var();
    if (IsBinary(op())) m = std::max(m, arg(1).max_var());
    return m;
  }

  friend bool StructurallyEqual(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.op() != b.op()) return false;
    switch (a.op()) {
      case Op::kConst: return a.value() == b.value();
      case Op::kVar: return a.var() == b.var();
      default: break;
    }
    if (!StructurallyEqual(a.arg(0), b.arg(0))) return false;
    return !IsBinary(a.op()) || StructurallyEqual(a.arg(1), b.arg(1));
  }

 private:
  struct Node {
    Op op = Op::kConst;
    double value = 0.0;
    int var = -1;
    std::array<std::shared_ptr<const Node>, 2> children;
  };

  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  std::shared_ptr<const Node> node_;
};

inline Expr operator+(Expr a, Expr b) {
  return Expr::Binary(Op::kAdd, std::move(a), std::move(b));
}
inline Expr operator-(Expr a, Expr b) {
  return Expr::Binary(Op::kSub, std::move(a), std::move(b));
}
inline Expr operator*(Expr a, Expr b) {
  return Expr::Binary(Op::kMul, std::move(a), std::move(b));
}
inline Expr operator/(Expr a, Expr b) {
  return Expr::Binary(Op::kDiv, std::move(a), std::move(b));
}
inline Expr operator-(Expr a) { return Expr::Unary(Op::kNeg, std::move(a)); }

// ---------------------------------------------------------------------------
// Printing

inline std::string DefaultVarName(int index) {
  return "x" + std::to_string(index + 1);
}

inline std::string FormatNumber(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

namespace detail {

inline int Precedence(const Expr& e) {
  switch (e.op()) {
    case Op::kAdd:
    case Op::kSub: return 1;
    case Op::kMul:
    case Op::kDiv: return 2;
    case Op::kNeg: return 3;
    case Op::kPow: return 4;
    case Op::kConst: return e.value() < 0.0 ? 0 : 5;
    default: return 5;
  }
}

inline void Print(const Expr& e, std::span<const std::string> names,
                  std::string& out) {
  auto child = [&](const Expr& c, int min_prec) {
    if (Precedence(c) < min_prec) {
      out += '(';
      Print(c, names, out);
      out += ')';
    } else {
      Print(c, names, out);
    }
  };
  switch (e.op()) {
    case Op::kConst: out += FormatNumber(e.value()); return;
    case Op::kVar:
      out += e.var() < static_cast<int>(names.size()) ? names[e.var()]
                                                      : DefaultVarName(e.var());
      return;
    case Op::kNeg:
      out += '-';
      child(e.arg(0), 3);
      return;
    case Op::kAdd:
    case Op::kSub:
      child(e.arg(0), 1);
      out += e.op() == Op::kAdd ? " + " : " - ";
      child(e.arg(1), 2);
      return;
    case Op::kMul:
    case Op::kDiv:
      child(e.arg(0), 2);
      out += e.op() == Op::kMul ? "*" : "/";
      child(e.arg(1), 3);
      return;
    case Op::kPow: {
      child(e.arg(0), 5);
      out += '^';
      const double p = e.arg(1).value();
      if (p < 0.0) {
        out += "(" + FormatNumber(p) + ")";
      } else {
        out += FormatNumber(p);
      }
      return;
    }
    default:
      out += FunctionName(e.op());
      out += '(';
      Print(e.arg(0), names, out);
      out += ')';
      return;
  }
}

}  // namespace detail

/// Renders an expression in the input grammar. Variables without a supplied
/// name print as x1, x2, ...
inline std::string ToString(const Expr& e,
                            std::span<const std::string> names = {}) {
  std::string out;
  detail::Print(e, names, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Parser {
 public:
  Parser(std::string_view src, std::span<const std::string> vars, int line,
         int column)
      : src_(src), vars_(vars), line_(line), column_(column) {}

  Expr Parse() {
    Next();
    Expr e = ParseExpr();
    if (tok_.kind != Tok::kEnd) Fail(ErrorCode::kSyntax, "unexpected token '" + tok_.text + "'");
    return e;
  }

 private:
  enum class Tok { kNumber, kIdent, kPunct, kEnd };
  struct Token {
    Tok kind = Tok::kEnd;
    std::string text;
    double number = 0.0;
    int line = 1;
    int column = 1;
  };

  [[noreturn]] void Fail(ErrorCode code, const std::string& msg) const {
    throw ParseError(code, msg, tok_.line, tok_.column);
  }

  void Advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void Next() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r' ||
            src_[pos_] == '\n')) {
      Advance();
    }
    tok_ = Token{};
    tok_.line = line_;
    tok_.column = column_;
    if (pos_ >= src_.size()) {
      tok_.kind = Tok::kEnd;
      tok_.text = "end of input";
      return;
    }
    const char c = src_[pos_];
    auto is_digit = [](char ch) { return ch >= '0' && ch <= '9'; };
    if (is_digit(c) || (c == '.' && pos_ + 1 < src_.size() && is_digit(src_[pos_ + 1]))) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && is_digit(src_[pos_])) Advance();
      if (pos_ < src_.size() && src_[pos_] == '.') {
        Advance();
        while (pos_ < src_.size() && is_digit(src_[pos_])) Advance();
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t look = pos_ + 1;
        if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
        if (look < src_.size() && is_digit(src_[look])) {
          while (pos_ < look) Advance();
          while (pos_ < src_.size() && is_digit(src_[pos_])) Advance();
        }
      }
      tok_.kind = Tok::kNumber;
      tok_.text = std::string(src_.substr(start, pos_ - start));
      const auto res = std::from_chars(tok_.text.data(),
                                       tok_.text.data() + tok_.text.size(),
                                       tok_.number);
      if (res.ec != std::errc()) Fail(ErrorCode::kSyntax, "malformed number '" + tok_.text + "'");
      return;
    }
    auto is_alpha = [](char ch) {
      return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || ch == '_';
    };
    if (is_alpha(c)) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && (is_alpha(src_[pos_]) || is_digit(src_[pos_]))) {
        Advance();
      }
      tok_.kind = Tok::kIdent;
      tok_.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    if (std::string_view("+-*/^(),").find(c) != std::string_view::npos) {
      tok_.kind = Tok::kPunct;
      tok_.text = std::string(1, c);
      Advance();
      return;
    }
    Fail(ErrorCode::kSyntax, std::string("unexpected character '") + c + "'");
  }

  bool IsPunct(char c) const {
    return tok_.kind == Tok::kPunct && tok_.text[0] == c;
  }

  void Expect(char c) {
    if (!IsPunct(c)) {
      Fail(ErrorCode::kSyntax, std::string("expected '") + c + "' but found '" + tok_.text + "'");
    }
    Next();
  }

  Expr ParseExpr() {
    Expr lhs = ParseTerm();
    while (IsPunct('+') || IsPunct('-')) {
      const Op op = IsPunct('+') ? Op::kAdd : Op::kSub;
      Next();
      lhs = Expr::Binary(op, lhs, ParseTerm());
    }
    return lhs;
  }

  Expr ParseTerm() {
    Expr lhs = ParseFactor();
    while (IsPunct('*') || IsPunct('/')) {
      const Op op = IsPunct('*') ? Op::kMul : Op::kDiv;
      Next();
      lhs = Expr::Binary(op, lhs, ParseFactor());
    }
    return lhs;
  }

  Expr ParseFactor() {
    if (IsPunct('-')) {
      Next();
      return Expr::Unary(Op::kNeg, ParseFactor());
    }
    Expr base = ParseBase();
    if (IsPunct('^')) {
      Next();
      return Expr::Binary(Op::kPow, base, Expr::Constant(ParseExponent()));
    }
    return base;
  }

  double ParseExponent() {
    bool parens = false;
    if (IsPunct('(')) {
      parens = true;
      Next();
    }
    double sign = 1.0;
    if (IsPunct('-')) {
      sign = -1.0;
      Next();
    }
    if (tok_.kind != Tok::kNumber) {
      Fail(ErrorCode::kExponent,
           "exponent must be a numeric constant, found '" + tok_.text + "'");
    }
    const double value = sign * tok_.number;
    Next();
    if (parens) Expect(')');
    return value;
  }

  static bool LookupFunction(std::string_view name, Op& op) {
    static const std::array<std::pair<std::string_view, Op>, 7> kFunctions = {{
        {"sin", Op::kSin}, {"cos", Op::kCos}, {"tan", Op::kTan},
        {"exp", Op::kExp}, {"ln", Op::kLn}, {"sqrt", Op::kSqrt},
        {"tanh", Op::kTanh},
    }};
    for (const auto& [n, o] : kFunctions) {
      if (n == name) {
        op = o;
        return true;
      }
    }
    return false;
  }

  Expr ParseBase() {
    if (tok_.kind == Tok::kNumber) {
      const double v = tok_.number;
      Next();
      return Expr::Constant(v);
    }
    if (tok_.kind == Tok::kIdent) {
      Op fn{};
      if (LookupFunction(tok_.text, fn)) {
        const std::string name = tok_.text;
        Next();
        if (!IsPunct('(')) {
          Fail(ErrorCode::kArity, "function '" + name + "' expects one parenthesized argument");
        }
        Next();
        if (IsPunct(')')) {
          Fail(ErrorCode::kArity, "function '" + name + "' expects one argument, got none");
        }
        Expr arg = ParseExpr();
        if (IsPunct(',')) {
          Fail(ErrorCode::kArity, "function '" + name + "' expects one argument, got more");
        }
        Expect(')');
        return Expr::Unary(fn, arg);
      }
      for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == tok_.text) {
          Next();
          return Expr::Variable(static_cast<int>(i));
        }
      }
      Fail(ErrorCode::kUnknownIdentifier, "unknown identifier '" + tok_.text + "'");
    }
    if (IsPunct('(')) {
      Next();
      Expr inner = ParseExpr();
      Expect(')');
      return inner;
    }
    Fail(ErrorCode::kSyntax, "unexpected '" + tok_.text + "'");
  }

  std::string_view src_;
  std::span<const std::string> vars_;
  std::size_t pos_ = 0;
  int line_;
  int column_;
  Token tok_;
};

}  // namespace detail

/// Parses `src` against the declared variable names. `line` and `column`
/// offset the reported error location when the text is embedded in a file.
inline Expr ParseExpression(std::string_view src,
                            std::span<const std::string> var_names,
                            int line = 1, int column = 1) {
  return detail::Parser(src, var_names, line, column).Parse();
}

// ---------------------------------------------------------------------------
// Evaluation

inline double EvaluateUnchecked(const Expr& e, std::span<const double> p) {
  switch (e.op()) {
    case Op::kConst: return e.value();
    case Op::kVar: return p[e.var()];
    default: break;
  }
  const double a = EvaluateUnchecked(e.arg(0), p);
  if (IsUnary(e.op())) return detail::ApplyUnary(e.op(), a);
  return detail::ApplyBinary(e.op(), a, EvaluateUnchecked(e.arg(1), p));
}

/// Evaluates at `p`. Throws Error(kDomain) when a partial function is
/// undefined at `p` or the result is not finite.
inline double Evaluate(const Expr& e, std::span<const double> p) {
  if (e.max_var() >= static_cast<int>(p.size())) {
    throw Error(ErrorCode::kDimension, "point has fewer coordinates than the expression uses");
  }
  const double v = EvaluateUnchecked(e, p);
  if (!std::isfinite(v)) detail::ThrowDomain("non-finite value");
  return v;
}

/// Flattened postfix form of an expression for repeated evaluation in
/// integrator inner loops.
class Program {
 public:
  Program() = default;

  explicit Program(const Expr& e) {
    Emit(e);
    int depth = 0;
    for (const auto& ins : code_) {
      if (ins.op == Op::kConst || ins.op == Op::kVar) {
        ++depth;
      } else if (IsBinary(ins.op)) {
        --depth;
      }
      max_depth_ = std::max(max_depth_, depth);
    }
  }

  double operator()(std::span<const double> p) const {
    constexpr int kInline = 64;
    std::array<double, kInline> small{};
    std::vector<double> large;
    double* stack = small.data();
    if (max_depth_ > kInline) {
      large.resize(max_depth_);
      stack = large.data();
    }
    int top = -1;
    for (const auto& ins : code_) {
      switch (ins.op) {
        case Op::kConst: stack[++top] = ins.value; break;
        case Op::kVar: stack[++top] = p[ins.var]; break;
        default:
          if (IsUnary(ins.op)) {
            stack[top] = detail::ApplyUnary(ins.op, stack[top]);
          } else {
            const double rhs = stack[top--];
            stack[top] = detail::ApplyBinary(ins.op, stack[top], rhs);
          }
      }
    }
    if (!std::isfinite(stack[0])) detail::ThrowDomain("non-finite value");
    return stack[0];
  }

 private:
  struct Instruction {
    Op op;
    int var;
    double value;
  };

  void Emit(const Expr& e) {
    switch (e.op()) {
      case Op::kConst: code_.push_back({Op::kConst, -1, e.value()}); return;
      case Op::kVar: code_.push_back({Op::kVar, e.var(), 0.0}); return;
      default: break;
    }
    Emit(e.arg(0));
    if (IsBinary(e.op())) Emit(e.arg(1));
    code_.push_back({e.op(), -1, 0.0});
  }

  std::vector<Instruction> code_;
  int max_depth_ = 1;
};

// ---------------------------------------------------------------------------
// Differentiation

namespace detail {

// Builders used while differentiating: they drop multiplications by 0 and 1
// and additions of 0, nothing more.
inline Expr DAdd(Expr a, Expr b) {
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return a + b;
}
inline Expr DSub(Expr a, Expr b) {
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  return a - b;
}
inline Expr DMul(Expr a, Expr b) {
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::Constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  return a * b;
}
inline Expr DDiv(Expr a, Expr b) {
  if (a.is_constant(0.0)) return Expr::Constant(0.0);
  if (b.is_constant(1.0)) return a;
  return a / b;
}
inline Expr DNeg(Expr a) {
  if (a.is_constant(0.0)) return a;
  return -a;
}
inline Expr DPow(Expr a, double p) {
  return Expr::Binary(Op::kPow, std::move(a), Expr::Constant(p));
}

}  // namespace detail

/// Exact partial derivative with respect to variable `var_index`.
inline Expr Differentiate(const Expr& e, int var_index) {
  using namespace detail;
  switch (e.op()) {
    case Op::kConst: return Expr::Constant(0.0);
    case Op::kVar: return Expr::Constant(e.var() == var_index ? 1.0 : 0.0);
    default: break;
  }
  const Expr u = e.arg(0);
  const Expr du = Differentiate(u, var_index);
  switch (e.op()) {
    case Op::kNeg: return DNeg(du);
    case Op::kSin: return DMul(Expr::Unary(Op::kCos, u), du);
    case Op::kCos: return DMul(-Expr::Unary(Op::kSin, u), du);
    case Op::kTan: return DDiv(du, DPow(Expr::Unary(Op::kCos, u), 2.0));
    case Op::kExp: return DMul(e, du);
    case Op::kLn: return DDiv(du, u);
    case Op::kSqrt: return DDiv(du, Expr::Constant(2.0) * e);
    case Op::kTanh:
      return DMul(Expr::Constant(1.0) - DPow(e, 2.0), du);
    default: break;
  }
  const Expr v = e.arg(1);
  if (e.op() == Op::kPow) {
    const double p = v.value();
    if (p == 0.0) return Expr::Constant(0.0);
    return DMul(DMul(Expr::Constant(p), DPow(u, p - 1.0)), du);
  }
  const Expr dv = Differentiate(v, var_index);
  switch (e.op()) {
    case Op::kAdd: return DAdd(du, dv);
    case Op::kSub: return DSub(du, dv);
    case Op::kMul: return DAdd(DMul(du, v), DMul(u, dv));
    case Op::kDiv:
      if (v.is_constant()) return DDiv(du, v);
      return DDiv(DSub(DMul(du, v), DMul(u, dv)), DPow(v, 2.0));
    default: break;
  }
  return Expr::Constant(0.0);
}

// ---------------------------------------------------------------------------
// Simplification: constant folding, 0/1 identities and like-term
// cancellation in sums. No trigonometric or algebraic rewriting.

namespace detail {

struct Term {
  double coef;
  Expr expr;  // non-constant
  std::string key;
};

inline void CollectSum(const Expr& e, double sign, double& constant,
                       std::vector<Term>& terms) {
  switch (e.op()) {
    case Op::kAdd:
      CollectSum(e.arg(0), sign, constant, terms);
      CollectSum(e.arg(1), sign, constant, terms);
      return;
    case Op::kSub:
      CollectSum(e.arg(0), sign, constant, terms);
      CollectSum(e.arg(1), -sign, constant, terms);
      return;
    case Op::kNeg: CollectSum(e.arg(0), -sign, constant, terms); return;
    case Op::kConst: constant += sign * e.value(); return;
    default: break;
  }
  double coef = sign;
  Expr body = e;
  if (e.op() == Op::kMul && e.arg(0).is_constant()) {
    coef *= e.arg(0).value();
    body = e.arg(1);
  } else if (e.op() == Op::kMul && e.arg(1).is_constant()) {
    coef *= e.arg(1).value();
    body = e.arg(0);
  }
  std::string key = ToString(body);
  for (auto& t : terms) {
    if (t.key == key) {
      t.coef += coef;
      return;
    }
  }
  terms.push_back({coef, body, std::move(key)});
}

inline Expr Scaled(double coef, const Expr& body) {
  if (coef == 1.0) return body;
  return Expr::Constant(coef) * body;
}

inline Expr RebuildSum(double constant, const std::vector<Term>& terms) {
  Expr acc;
  bool have = false;
  for (const auto& t : terms) {
    if (t.coef == 0.0) continue;
    if (!have) {
      acc = t.coef < 0.0 ? -Scaled(-t.coef, t.expr) : Scaled(t.coef, t.expr);
      have = true;
    } else if (t.coef < 0.0) {
      acc = acc - Scaled(-t.coef, t.expr);
    } else {
      acc = acc + Scaled(t.coef, t.expr);
    }
  }
  if (!have) return Expr::Constant(constant);
  if (constant > 0.0) return acc + Expr::Constant(constant);
  if (constant < 0.0) return acc - Expr::Constant(-constant);
  return acc;
}

inline void CollectProduct(const Expr& e, double& constant,
                           std::vector<Expr>& factors) {
  if (e.op() == Op::kMul) {
    CollectProduct(e.arg(0), constant, factors);
    CollectProduct(e.arg(1), constant, factors);
  } else if (e.is_constant()) {
    constant *= e.value();
  } else if (e.op() == Op::kNeg) {
    constant = -constant;
    CollectProduct(e.arg(0), constant, factors);
  } else {
    factors.push_back(e);
  }
}

inline Expr SimplifyNode(const Expr& e);

inline Expr FoldIfConstant(const Expr& e) {
  bool all_const = e.arg(0).is_constant() &&
                   (!IsBinary(e.op()) || e.arg(1).is_constant());
  if (!all_const) return e;
  try {
    const double v = IsUnary(e.op())
                         ? ApplyUnary(e.op(), e.arg(0).value())
                         : ApplyBinary(e.op(), e.arg(0).value(), e.arg(1).value());
    if (std::isfinite(v)) return Expr::Constant(v);
  } catch (const Error&) {
  }
  return e;
}

inline Expr SimplifyNode(const Expr& e) {
  switch (e.op()) {
    case Op::kConst:
    case Op::kVar: return e;
    default: break;
  }
  const Expr a = SimplifyNode(e.arg(0));
  if (IsUnary(e.op())) {
    if (e.op() == Op::kNeg && a.op() == Op::kNeg) return a.arg(0);
    return FoldIfConstant(Expr::Unary(e.op(), a));
  }
  const Expr b = e.op() == Op::kPow ? e.arg(1) : SimplifyNode(e.arg(1));
  switch (e.op()) {
    case Op::kAdd:
    case Op::kSub: {
      double constant = 0.0;
      std::vector<Term> terms;
      CollectSum(Expr::Binary(e.op(), a, b), 1.0, constant, terms);
      return RebuildSum(constant, terms);
    }
    case Op::kMul: {
      double constant = 1.0;
      std::vector<Expr> factors;
      CollectProduct(a, constant, factors);
      CollectProduct(b, constant, factors);
      if (constant == 0.0 || factors.empty()) return Expr::Constant(constant);
      Expr acc = factors[0];
      for (std::size_t i = 1; i < factors.size(); ++i) acc = acc * factors[i];
      if (constant == -1.0) return -acc;
      return Scaled(constant, acc);
    }
    case Op::kDiv:
      if (a.is_constant(0.0)) return a;
      if (b.is_constant(1.0)) return a;
      if (b.is_constant() && b.value() != 0.0 && !a.is_constant()) {
        return SimplifyNode(Expr::Constant(1.0 / b.value()) * a);
      }
      return FoldIfConstant(a / b);
    case Op::kPow:
      if (b.value() == 1.0) return a;
      if (b.value() == 0.0) return Expr::Constant(1.0);
      return FoldIfConstant(Expr::Binary(Op::kPow, a, b));
    default: break;
  }
  return e;
}

}  // namespace detail

/// Returns an expression equal in value wherever `e` is defined.
inline Expr Simplify(const Expr& e) { return detail::SimplifyNode(e); }

}  // namespace geoctrl
