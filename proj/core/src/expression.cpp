#include "ocbnn/expression.hpp"

#include <cctype>
#include <numbers>

namespace ocbnn {

class ExpressionParser {
 public:
  ExpressionParser(const std::string& text, const std::map<std::string, int>& aliases)
      : text_(text), aliases_(aliases) {}

  Expression run() {
    const int root = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    Expression e;
    e.nodes_ = std::make_shared<const std::vector<Expression::Node>>(std::move(nodes_));
    e.root_ = root;
    e.text_ = text_;
    return e;
  }

 private:
  using Node = Expression::Node;
  using Op = Expression::Op;
  using Fn = Expression::Fn;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression '" + text_ + "': " + what + " at offset " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int add(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int binary(Op op, int a, int b) {
    Node n;
    n.op = op;
    n.args = {a, b};
    return add(std::move(n));
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      if (accept('+')) lhs = binary(Op::add, lhs, parse_term());
      else if (accept('-')) lhs = binary(Op::sub, lhs, parse_term());
      else return lhs;
    }
  }

  int parse_term() {
    int lhs = parse_unary();
    for (;;) {
      if (accept('*')) lhs = binary(Op::mul, lhs, parse_unary());
      else if (accept('/')) lhs = binary(Op::div, lhs, parse_unary());
      else return lhs;
    }
  }

  int parse_unary() {
    if (accept('-')) {
      Node n;
      n.op = Op::neg;
      n.args = {parse_unary()};
      return add(std::move(n));
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  int parse_power() {
    const int base = parse_atom();
    if (accept('^')) return binary(Op::pow, base, parse_unary());
    return base;
  }

  int parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (accept('(')) {
      const int inner = parse_expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = text_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      Node n;
      n.value = v;
      return add(std::move(n));
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' || text_[pos_] == '-')) {
        // allow '-' only inside alias names that contain it (e.g. column names)
        if (text_[pos_] == '-' && !alias_prefix(start, pos_ + 1)) break;
        ++pos_;
      }
      const std::string name = text_.substr(start, pos_ - start);
      if (accept('(')) return parse_call(name);
      return parse_name(name);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  bool alias_prefix(std::size_t start, std::size_t end) const {
    const std::string prefix = text_.substr(start, end - start);
    for (const auto& [name, idx] : aliases_) {
      if (name.compare(0, prefix.size(), prefix) == 0) return true;
    }
    return false;
  }

  int parse_name(const std::string& name) {
    Node n;
    if (name == "y") {
      n.op = Op::output;
      return add(std::move(n));
    }
    if (name == "inf") {
      n.value = std::numeric_limits<double>::infinity();
      return add(std::move(n));
    }
    if (name == "pi") {
      n.value = std::numbers::pi;
      return add(std::move(n));
    }
    if (auto it = aliases_.find(name); it != aliases_.end()) {
      n.op = Op::input;
      n.index = it->second;
      return add(std::move(n));
    }
    if (name.size() > 1 && name[0] == 'x') {
      bool digits = true;
      for (std::size_t i = 1; i < name.size(); ++i) digits = digits && std::isdigit(static_cast<unsigned char>(name[i]));
      if (digits) {
        const int k = std::stoi(name.substr(1));
        if (k < 1) fail("inputs are numbered from x1");
        n.op = Op::input;
        n.index = k - 1;
        return add(std::move(n));
      }
    }
    fail("unknown name '" + name + "'");
  }

  int parse_call(const std::string& name) {
    static const std::map<std::string, std::pair<Fn, int>> functions = {
        {"sin", {Fn::sin, 1}},   {"cos", {Fn::cos, 1}},   {"tan", {Fn::tan, 1}}, {"exp", {Fn::exp, 1}},
        {"log", {Fn::log, 1}},   {"sqrt", {Fn::sqrt, 1}}, {"abs", {Fn::abs, 1}}, {"tanh", {Fn::tanh, 1}},
        {"min", {Fn::min, 2}},   {"max", {Fn::max, 2}},
    };
    const auto it = functions.find(name);
    if (it == functions.end()) fail("unknown function '" + name + "'");
    Node n;
    n.op = Op::call;
    n.fn = it->second.first;
    n.args.push_back(parse_expr());
    while (accept(',')) n.args.push_back(parse_expr());
    if (!accept(')')) fail("expected ')'");
    if (static_cast<int>(n.args.size()) != it->second.second)
      fail(name + " takes " + std::to_string(it->second.second) + " argument(s)");
    return add(std::move(n));
  }

  const std::string& text_;
  const std::map<std::string, int>& aliases_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;
};

Expression::Expression() : nodes_(std::make_shared<const std::vector<Node>>(1)), text_("0") {}

Expression Expression::constant(double value) {
  Expression e;
  std::vector<Node> nodes(1);
  nodes[0].value = value;
  e.nodes_ = std::make_shared<const std::vector<Node>>(std::move(nodes));
  e.text_ = std::isinf(value) ? (value > 0 ? "inf" : "-inf") : std::to_string(value);
  return e;
}

Expression Expression::parse(const std::string& text, const std::map<std::string, int>& aliases) {
  return ExpressionParser(text, aliases).run();
}

bool Expression::depends_on_y() const {
  for (const auto& n : *nodes_) {
    if (n.op == Op::output) return true;
  }
  return false;
}

bool Expression::is_constant() const {
  for (const auto& n : *nodes_) {
    if (n.op == Op::output || n.op == Op::input) return false;
  }
  return true;
}

int Expression::max_input_index() const {
  int m = -1;
  for (const auto& n : *nodes_) {
    if (n.op == Op::input) m = std::max(m, n.index);
  }
  return m;
}

}  // namespace ocbnn
