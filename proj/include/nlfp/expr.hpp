#pragma once

#include "nlfp/core.hpp"

#include <array>
#include <cctype>
#include <memory>
#include <string>

namespace nlfp {

/// Variables an expression may read: t, x1..x3, z1..z3.
struct ExprVars {
  double t = 0.0;
  std::array<double, 3> x{};
  std::array<double, 3> z{};
};

/// Arithmetic mini-language: numbers, pi, t, x1..xd, z1..zd, + - * / ^,
/// unary minus, parentheses, abs log exp sqrt sin cos (one argument) and
/// min max (two). Parsed once into a closure tree.
class Expr {
public:
  Expr() = default;

  /// `dim` bounds the x/z indices; `allow_z` admits z1..zd.
  static Expr parse(const std::string& text, int dim = 1, bool allow_z = false) {
    Parser p{text, dim, allow_z};
    Expr e;
    e.text_ = text;
    e.fn_ = std::make_shared<Node>(p.parse_all());
    return e;
  }
  double operator()(const ExprVars& v) const { return (*fn_)(v); }
  double operator()(double t, double x1) const {
    ExprVars v;
    v.t = t;
    v.x[0] = x1;
    return (*fn_)(v);
  }
  const std::string& text() const { return text_; }
  bool valid() const { return static_cast<bool>(fn_); }

private:
  using Node = std::function<double(const ExprVars&)>;

  struct Parser {
    const std::string& s;
    int dim;
    bool allow_z;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
      throw ValidationError("expression '" + s + "', column " + std::to_string(pos + 1) + ": " + what);
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    Node parse_all() {
      skip();
      if (pos == s.size()) fail("empty expression");
      Node n = sum();
      skip();
      if (pos != s.size()) fail(std::string("unexpected '") + s[pos] + "'");
      return n;
    }
    Node sum() {
      Node l = product();
      for (;;) {
        if (eat('+')) {
          l = [a = l, b = product()](const ExprVars& v) { return a(v) + b(v); };
        } else if (eat('-')) {
          l = [a = l, b = product()](const ExprVars& v) { return a(v) - b(v); };
        } else {
          return l;
        }
      }
    }
    Node product() {
      Node l = unary();
      for (;;) {
        if (eat('*')) {
          l = [a = l, b = unary()](const ExprVars& v) { return a(v) * b(v); };
        } else if (eat('/')) {
          l = [a = l, b = unary()](const ExprVars& v) { return a(v) / b(v); };
        } else {
          return l;
        }
      }
    }
    Node unary() {
      if (eat('-')) return [a = unary()](const ExprVars& v) { return -a(v); };
      if (eat('+')) return unary();
      return power();
    }
    /// Right-associative; binds tighter than unary minus on its left: -x^2 = -(x^2).
    Node power() {
      Node base = atom();
      if (eat('^')) return [a = base, b = unary()](const ExprVars& v) { return std::pow(a(v), b(v)); };
      return base;
    }
    Node atom() {
      skip();
      if (pos >= s.size()) fail("unexpected end of expression");
      if (eat('(')) {
        Node n = sum();
        if (!eat(')')) fail("expected ')'");
        return n;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) return name();
      fail(std::string("unexpected '") + c + "'");
    }
    Node number() {
      const char* begin = s.c_str() + pos;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos += static_cast<std::size_t>(end - begin);
      return [v](const ExprVars&) { return v; };
    }
    Node name() {
      const std::size_t start = pos;
      while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
      const std::string id = s.substr(start, pos - start);
      if (id == "t") return [](const ExprVars& v) { return v.t; };
      if (id == "pi") return [](const ExprVars&) { return kPi; };
      if ((id[0] == 'x' || id[0] == 'z') && id.size() == 2 && std::isdigit(static_cast<unsigned char>(id[1]))) {
        const int i = id[1] - '1';
        if (i < 0 || i >= dim) fail("variable '" + id + "' exceeds dimension " + std::to_string(dim));
        if (id[0] == 'x') return [i](const ExprVars& v) { return v.x[i]; };
        if (!allow_z) fail("jump variable '" + id + "' is not allowed here");
        return [i](const ExprVars& v) { return v.z[i]; };
      }
      using F1 = double (*)(double);
      static const std::pair<const char*, F1> unary_fns[] = {
          {"abs", [](double a) { return std::abs(a); }}, {"log", [](double a) { return std::log(a); }},
          {"exp", [](double a) { return std::exp(a); }}, {"sqrt", [](double a) { return std::sqrt(a); }},
          {"sin", [](double a) { return std::sin(a); }}, {"cos", [](double a) { return std::cos(a); }}};
      for (const auto& [nm, f] : unary_fns) {
        if (id != nm) continue;
        if (!eat('(')) fail("expected '(' after " + id);
        Node a = sum();
        if (!eat(')')) fail("expected ')'");
        return [f = f, a](const ExprVars& v) { return f(a(v)); };
      }
      if (id == "min" || id == "max") {
        if (!eat('(')) fail("expected '(' after " + id);
        Node a = sum();
        if (!eat(',')) fail("expected ',' in " + id);
        Node b = sum();
        if (!eat(')')) fail("expected ')'");
        if (id == "min") return [a, b](const ExprVars& v) { return std::min(a(v), b(v)); };
        return [a, b](const ExprVars& v) { return std::max(a(v), b(v)); };
      }
      pos = start;
      fail("unknown identifier '" + id + "'");
    }
  };

  std::string text_;
  std::shared_ptr<Node> fn_;
};

}  // namespace nlfp
