#include <fstream>
#include <sstream>

#include "ocbnn/constraints.hpp"
#include "toml_util.hpp"

namespace ocbnn {
namespace detail {

std::string where(const toml::node& node) {
  const auto& src = node.source();
  if (!src.begin) return "";
  return " (line " + std::to_string(src.begin.line) + ")";
}

double get_double(const toml::table& t, const std::string& key, double fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<double>()) return *v;
  throw ConfigError("'" + key + "' must be a number" + where(*n));
}

double require_double(const toml::table& t, const std::string& key, const std::string& ctx) {
  if (!t.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
  return get_double(t, key, 0.0);
}

std::int64_t get_int(const toml::table& t, const std::string& key, std::int64_t fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<std::int64_t>()) return *v;
  throw ConfigError("'" + key + "' must be an integer" + where(*n));
}

std::string get_string(const toml::table& t, const std::string& key, const std::string& fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<std::string>()) return *v;
  throw ConfigError("'" + key + "' must be a string" + where(*n));
}

std::string require_string(const toml::table& t, const std::string& key, const std::string& ctx) {
  if (!t.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
  return get_string(t, key, "");
}

bool get_bool(const toml::table& t, const std::string& key, bool fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<bool>()) return *v;
  throw ConfigError("'" + key + "' must be a boolean" + where(*n));
}

std::vector<double> get_doubles(const toml::table& t, const std::string& key, const std::string& ctx) {
  std::vector<double> out;
  const auto* n = t.get(key);
  if (!n) return out;
  const auto* arr = n->as_array();
  if (!arr) throw ConfigError(ctx + ": '" + key + "' must be an array" + where(*n));
  for (const auto& e : *arr) {
    auto v = e.value<double>();
    if (!v) throw ConfigError(ctx + ": '" + key + "' must contain numbers" + where(e));
    out.push_back(*v);
  }
  return out;
}

std::vector<int> get_ints(const toml::table& t, const std::string& key, const std::string& ctx) {
  std::vector<int> out;
  const auto* n = t.get(key);
  if (!n) return out;
  const auto* arr = n->as_array();
  if (!arr) throw ConfigError(ctx + ": '" + key + "' must be an array" + where(*n));
  for (const auto& e : *arr) {
    auto v = e.value<std::int64_t>();
    if (!v) throw ConfigError(ctx + ": '" + key + "' must contain integers" + where(e));
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

const toml::table* get_table(const toml::table& t, const std::string& key) {
  const auto* n = t.get(key);
  if (!n) return nullptr;
  const auto* tab = n->as_table();
  if (!tab) throw ConfigError("'" + key + "' must be a table" + where(*n));
  return tab;
}

Expression to_expression(const toml::node& node, const std::map<std::string, int>& aliases, const std::string& ctx) {
  if (auto v = node.value<double>()) return Expression::constant(*v);
  if (auto s = node.value<std::string>()) return Expression::parse(*s, aliases);
  throw ConfigError(ctx + ": expected a number or an expression string" + where(node));
}

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Box parse_box(const toml::table& t, const std::string& lo_key, const std::string& hi_key, int input_dim,
              const std::string& ctx) {
  Box b;
  b.lower = to_vector(get_doubles(t, lo_key, ctx));
  b.upper = to_vector(get_doubles(t, hi_key, ctx));
  if (b.lower.size() != input_dim || b.upper.size() != input_dim)
    throw ConfigError(ctx + ": '" + lo_key + "'/'" + hi_key + "' need " + std::to_string(input_dim) + " entries");
  return b;
}

std::vector<Expression> expressions(const toml::table& t, const std::string& key,
                                    const std::map<std::string, int>& aliases, const std::string& ctx) {
  std::vector<Expression> out;
  const auto* arr = t.get_as<toml::array>(key);
  if (!arr) throw ConfigError(ctx + ": '" + key + "' must be an array");
  for (const auto& e : *arr) out.push_back(to_expression(e, aliases, ctx));
  return out;
}

InputRegion parse_region(const toml::table& t, int input_dim, const std::map<std::string, int>& aliases,
                         const std::string& ctx) {
  const std::string kind = get_string(t, "kind", "box");
  if (kind == "box") return parse_box(t, "lower", "upper", input_dim, ctx + ".region");
  if (kind == "predicate") {
    PredicateRegion p;
    p.bounds = parse_box(t, "lower", "upper", input_dim, ctx + ".region");
    if (t.contains("inequalities")) {
      p.name = "inequalities";
      p.indicator = inequality_predicate(expressions(t, "inequalities", aliases, ctx + ".region"));
    } else {
      p.name = require_string(t, "name", ctx + ".region");
      p.indicator = named_predicate(p.name);
    }
    return p;
  }
  if (kind == "all") {
    WholeSpace s;
    s.dim = input_dim;
    if (t.contains("lower") || t.contains("upper")) s.sampling_box = parse_box(t, "lower", "upper", input_dim, ctx);
    s.walk_step_sd = get_double(t, "walk_step_sd", 1.0);
    if (t.contains("walk_start")) s.walk_start = to_vector(get_doubles(t, "walk_start", ctx));
    return s;
  }
  throw ConfigError(ctx + ": unknown region kind '" + kind + "'");
}

OutputRule parse_rule(const toml::table& t, const std::map<std::string, int>& aliases, const std::string& ctx) {
  const std::string kind = require_string(t, "kind", ctx + ".rule");
  if (kind == "values") return ValueSet{expressions(t, "values", aliases, ctx + ".rule")};
  if (kind == "inequalities") return InequalityList{expressions(t, "inequalities", aliases, ctx + ".rule")};
  if (kind == "intervals") {
    IntervalUnion u;
    const auto* arr = t.get_as<toml::array>("intervals");
    if (!arr) throw ConfigError(ctx + ".rule: 'intervals' must be an array of [lower, upper] pairs");
    for (const auto& e : *arr) {
      const auto* pair = e.as_array();
      if (!pair || pair->size() != 2) throw ConfigError(ctx + ".rule: each interval is a [lower, upper] pair" + where(e));
      u.intervals.push_back({to_expression(*pair->get(0), aliases, ctx), to_expression(*pair->get(1), aliases, ctx)});
    }
    return u;
  }
  throw ConfigError(ctx + ": unknown rule kind '" + kind + "'");
}

TargetDistribution parse_distribution(const toml::table& t, const std::map<std::string, int>& aliases,
                                      const std::string& ctx) {
  const std::string kind = require_string(t, "kind", ctx + ".distribution");
  const auto expr = [&](const std::string& key) {
    const auto* n = t.get(key);
    if (!n) throw ConfigError(ctx + ".distribution: missing '" + key + "'");
    return to_expression(*n, aliases, ctx);
  };
  if (kind == "gaussian") return GaussianTarget{expr("mean"), expr("sd")};
  if (kind == "bernoulli") return BernoulliTarget{expr("p")};
  if (kind == "categorical") return CategoricalTarget{expressions(t, "probs", aliases, ctx)};
  throw ConfigError(ctx + ": unknown distribution kind '" + kind + "'");
}

}  // namespace

Constraint parse_constraint_table(const toml::table& t, int input_dim, const std::map<std::string, int>& aliases,
                                  std::size_t index) {
  Constraint c;
  c.id = get_string(t, "id", "c" + std::to_string(index));
  const std::string ctx = "constraint '" + c.id + "'";
  c.polarity = polarity_from_string(get_string(t, "polarity", "positive"));
  const auto* region = get_table(t, "region");
  if (!region) throw ConfigError(ctx + ": missing [region]");
  c.region = parse_region(*region, input_dim, aliases, ctx);
  if (const auto* rule = get_table(t, "rule")) c.rule = parse_rule(*rule, aliases, ctx);
  if (const auto* dist = get_table(t, "distribution")) c.target = parse_distribution(*dist, aliases, ctx);
  c.validate();
  return c;
}

}  // namespace detail

std::vector<Constraint> parse_constraints(const std::string& toml_text, int input_dim,
                                          const std::map<std::string, int>& aliases) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("constraint file: ") + std::string(e.description()));
  }
  std::vector<Constraint> out;
  const auto* arr = root.get_as<toml::array>("constraints");
  if (!arr) return out;
  std::size_t i = 0;
  for (const auto& node : *arr) {
    const auto* t = node.as_table();
    if (!t) throw ConfigError("constraints must be tables");
    out.push_back(detail::parse_constraint_table(*t, input_dim, aliases, i++));
  }
  return out;
}

std::vector<Constraint> load_constraint_file(const std::string& path, int input_dim,
                                             const std::map<std::string, int>& aliases) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open constraint file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_constraints(ss.str(), input_dim, aliases);
}

}  // namespace ocbnn
