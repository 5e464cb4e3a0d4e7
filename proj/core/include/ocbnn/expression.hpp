#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ocbnn/dual.hpp"
#include "ocbnn/error.hpp"

namespace ocbnn {

/// Small arithmetic expression over inputs x1..xQ and the output y.
///
/// Grammar:
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := '-' unary | power
///   power   := atom ('^' unary)?
///   atom    := number | 'inf' | 'pi' | name | name '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Names resolve to `y`, `x<k>` (1-based), or a caller-supplied alias for an
/// input column. Functions: sin cos tan exp log sqrt abs tanh min max.
class Expression {
 public:
  Expression();  // the constant 0
  static Expression constant(double value);
  static Expression parse(const std::string& text, const std::map<std::string, int>& aliases = {});

  template <typename T>
  T eval(std::span<const double> x, T y) const;

  double operator()(std::span<const double> x, double y = 0.0) const { return eval<double>(x, y); }

  /// Value and d/dy at (x, y).
  Dual eval_dual(std::span<const double> x, double y) const { return eval<Dual>(x, Dual(y, 1.0)); }

  bool depends_on_y() const;
  bool is_constant() const;
  /// Largest 0-based input index referenced, or -1.
  int max_input_index() const;
  const std::string& text() const { return text_; }

 private:
  enum class Op { constant, input, output, neg, add, sub, mul, div, pow, call };
  enum class Fn { sin, cos, tan, exp, log, sqrt, abs, tanh, min, max };
  struct Node {
    Op op = Op::constant;
    double value = 0.0;
    int index = 0;
    Fn fn = Fn::sin;
    std::vector<int> args;
  };
  friend class ExpressionParser;

  template <typename T>
  T eval_node(int id, std::span<const double> x, const T& y) const;

  std::shared_ptr<const std::vector<Node>> nodes_;
  int root_ = 0;
  std::string text_;
};

template <typename T>
T Expression::eval(std::span<const double> x, T y) const {
  return eval_node<T>(root_, x, y);
}

template <typename T>
T Expression::eval_node(int id, std::span<const double> x, const T& y) const {
  using std::abs, std::cos, std::exp, std::log, std::pow, std::sin, std::sqrt, std::tan, std::tanh;
  const Node& n = (*nodes_)[static_cast<std::size_t>(id)];
  switch (n.op) {
    case Op::constant:
      return T(n.value);
    case Op::input:
      if (static_cast<std::size_t>(n.index) >= x.size())
        throw ShapeError("expression '" + text_ + "' references x" + std::to_string(n.index + 1) +
                         " but the input has " + std::to_string(x.size()) + " dimensions");
      return T(x[static_cast<std::size_t>(n.index)]);
    case Op::output:
      return y;
    case Op::neg:
      return -eval_node<T>(n.args[0], x, y);
    case Op::add:
      return eval_node<T>(n.args[0], x, y) + eval_node<T>(n.args[1], x, y);
    case Op::sub:
      return eval_node<T>(n.args[0], x, y) - eval_node<T>(n.args[1], x, y);
    case Op::mul:
      return eval_node<T>(n.args[0], x, y) * eval_node<T>(n.args[1], x, y);
    case Op::div:
      return eval_node<T>(n.args[0], x, y) / eval_node<T>(n.args[1], x, y);
    case Op::pow:
      return pow(eval_node<T>(n.args[0], x, y), eval_node<T>(n.args[1], x, y));
    case Op::call: {
      const T a = eval_node<T>(n.args[0], x, y);
      switch (n.fn) {
        case Fn::sin:
          return sin(a);
        case Fn::cos:
          return cos(a);
        case Fn::tan:
          return tan(a);
        case Fn::exp:
          return exp(a);
        case Fn::log:
          return log(a);
        case Fn::sqrt:
          return sqrt(a);
        case Fn::abs:
          return abs(a);
        case Fn::tanh:
          return tanh(a);
        case Fn::min: {
          const T b = eval_node<T>(n.args[1], x, y);
          return b < a ? b : a;
        }
        case Fn::max: {
          const T b = eval_node<T>(n.args[1], x, y);
          return b > a ? b : a;
        }
      }
    }
  }
  return T(0.0);
}

}  // namespace ocbnn
