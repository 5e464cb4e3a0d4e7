#include "ocbnn/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ocbnn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::span<const double> as_span(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

bool Box::contains(const Eigen::VectorXd& x) const {
  if (x.size() != lower.size()) throw ShapeError("box: dimension mismatch");
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

int region_dim(const InputRegion& region) {
  return std::visit(Overloaded{[](const Box& b) { return b.dim(); },
                               [](const PredicateRegion& p) { return p.bounds.dim(); },
                               [](const WholeSpace& s) { return s.dim; }},
                    region);
}

bool region_contains(const InputRegion& region, const Eigen::VectorXd& x) {
  return std::visit(Overloaded{[&](const Box& b) { return b.contains(x); },
                               [&](const PredicateRegion& p) { return p.bounds.contains(x) && p.indicator(x); },
                               [&](const WholeSpace& s) { return x.size() == s.dim; }},
                    region);
}

namespace {

void validate_box(const Box& b, const char* what) {
  if (b.lower.size() != b.upper.size() || b.lower.size() == 0)
    throw ConfigError(std::string(what) + ": lower and upper must have the same nonzero length");
  if ((b.lower.array() > b.upper.array()).any()) throw ConfigError(std::string(what) + ": lower must not exceed upper");
}

}  // namespace

void validate_region(const InputRegion& region) {
  std::visit(Overloaded{[](const Box& b) { validate_box(b, "box region"); },
                        [](const PredicateRegion& p) {
                          validate_box(p.bounds, "predicate bounding box");
                          if (!p.bounds.bounded()) throw ConfigError("predicate bounding box must be finite");
                          if (!((p.bounds.upper - p.bounds.lower).array() > 0).all())
                            throw ConfigError("predicate bounding box must have nonzero volume");
                          if (!p.indicator) throw ConfigError("predicate region needs an indicator");
                        },
                        [](const WholeSpace& s) {
                          if (s.dim < 1) throw ConfigError("input space dimension must be positive");
                          if (s.sampling_box) {
                            validate_box(*s.sampling_box, "sampling box");
                            if (s.sampling_box->dim() != s.dim) throw ConfigError("sampling box dimension mismatch");
                          }
                          if (!(s.walk_step_sd > 0)) throw ConfigError("walk step sd must be positive");
                        }},
             region);
}

std::function<bool(const Eigen::VectorXd&)> named_predicate(const std::string& name) {
  if (name == "same_sign") {
    return [](const Eigen::VectorXd& x) {
      if (x.size() != 2) throw ShapeError("same_sign predicate is two-dimensional");
      return x[0] * x[1] >= 0.0;
    };
  }
  if (name == "unit_ball") {
    return [](const Eigen::VectorXd& x) { return x.squaredNorm() <= 1.0; };
  }
  throw ConfigError("unknown predicate '" + name + "'");
}

std::function<bool(const Eigen::VectorXd&)> inequality_predicate(std::vector<Expression> inequalities) {
  return [ineq = std::move(inequalities)](const Eigen::VectorXd& x) {
    for (const auto& h : ineq) {
      if (!(h(as_span(x)) <= 0.0)) return false;
    }
    return true;
  };
}

std::string to_string(Polarity p) {
  switch (p) {
    case Polarity::positive:
      return "positive";
    case Polarity::negative:
      return "negative";
    case Polarity::probabilistic:
      return "probabilistic";
  }
  return "unknown";
}

Polarity polarity_from_string(const std::string& name) {
  if (name == "positive") return Polarity::positive;
  if (name == "negative") return Polarity::negative;
  if (name == "probabilistic") return Polarity::probabilistic;
  throw ConfigError("unknown polarity '" + name + "'");
}

void Constraint::validate() const {
  validate_region(region);
  if (polarity == Polarity::probabilistic) {
    if (!target) throw ConfigError("constraint '" + id + "': probabilistic constraints need a distribution");
    if (rule) throw ConfigError("constraint '" + id + "': probabilistic constraints carry no output rule");
    return;
  }
  if (!rule) throw ConfigError("constraint '" + id + "': deterministic constraints need an output rule");
  if (target) throw ConfigError("constraint '" + id + "': deterministic constraints carry no distribution");
  if (const auto* list = std::get_if<InequalityList>(&*rule); list && list->inequalities.empty())
    throw ConfigError("constraint '" + id + "': inequality list is empty");
  if (const auto* u = std::get_if<IntervalUnion>(&*rule)) {
    if (u->intervals.empty()) throw ConfigError("constraint '" + id + "': interval union is empty");
    // Constant endpoints are checked eagerly; x-dependent ones at evaluation.
    double prev_upper = -kInf;
    bool first = true;
    for (const auto& iv : u->intervals) {
      if (!iv.lower.is_constant() || !iv.upper.is_constant()) {
        first = true;
        continue;
      }
      const double a = iv.lower({}), b = iv.upper({});
      if (a > b) throw ConfigError("constraint '" + id + "': interval lower exceeds upper");
      if (!first && a <= prev_upper) throw ConfigError("constraint '" + id + "': intervals must be disjoint and ordered");
      prev_upper = b;
      first = false;
    }
  }
}

Constraint flip_polarity(const Constraint& c) {
  if (!c.deterministic()) throw ContractError("cannot flip a probabilistic constraint");
  Constraint out = c;
  out.polarity = c.polarity == Polarity::positive ? Polarity::negative : Polarity::positive;
  return out;
}

std::vector<NumericInterval> rule_intervals(const OutputRule& rule, const Eigen::VectorXd& x) {
  const auto xs = as_span(x);
  std::vector<NumericInterval> out;
  std::visit(
      Overloaded{
          [&](const ValueSet& s) {
            for (const auto& v : s.values) {
              const double y = v(xs);
              out.push_back({y, y});
            }
            std::sort(out.begin(), out.end(), [](auto a, auto b) { return a.lower < b.lower; });
          },
          [&](const IntervalUnion& u) {
            for (const auto& iv : u.intervals) {
              const double a = iv.lower(xs), b = iv.upper(xs);
              if (a > b) throw ContractError("interval lower exceeds upper at this input");
              if (!out.empty() && a <= out.back().upper) throw ContractError("intervals overlap or are unordered");
              out.push_back({a, b});
            }
          },
          [&](const InequalityList& list) {
            double lo = -kInf, hi = kInf;
            for (std::size_t i = 0; i < list.inequalities.size(); ++i) {
              const auto& g = list.inequalities[i];
              const Dual at0 = g.eval_dual(xs, 0.0);
              const double at1 = g(xs, 1.0);
              const double a = at0.v, b = at0.d;
              if (!std::isfinite(a) || !std::isfinite(b))
                throw NumericError("inequality " + std::to_string(i) + " is not finite");
              if (std::abs(at1 - (a + b)) > 1e-9 * (1.0 + std::abs(a) + std::abs(b)))
                throw ContractError("inequality " + std::to_string(i) + " is not affine in y");
              if (b > 0) hi = std::min(hi, -a / b);
              else if (b < 0) lo = std::max(lo, -a / b);
              else if (a > 0) return;  // never satisfied
            }
            if (lo <= hi) out.push_back({lo, hi});
          }},
      rule);
  return out;
}

std::vector<NumericInterval> complement(const std::vector<NumericInterval>& intervals) {
  std::vector<NumericInterval> out;
  double cursor = -kInf;
  for (const auto& iv : intervals) {
    if (iv.lower > cursor) out.push_back({cursor, iv.lower});
    cursor = std::max(cursor, iv.upper);
  }
  if (cursor < kInf) out.push_back({cursor, kInf});
  return out;
}

std::vector<NumericInterval> permitted_intervals(const Constraint& c, const Eigen::VectorXd& x) {
  if (!c.deterministic()) throw ContractError("permitted_intervals: constraint '" + c.id + "' is probabilistic");
  auto in = rule_intervals(*c.rule, x);
  return c.polarity == Polarity::positive ? in : complement(in);
}

namespace {

bool rule_member(const OutputRule& rule, const Eigen::VectorXd& x, double y) {
  const auto xs = as_span(x);
  return std::visit(Overloaded{[&](const ValueSet& s) {
                                 return std::any_of(s.values.begin(), s.values.end(),
                                                    [&](const Expression& v) { return v(xs) == y; });
                               },
                               [&](const IntervalUnion& u) {
                                 return std::any_of(u.intervals.begin(), u.intervals.end(), [&](const Interval& iv) {
                                   return iv.lower(xs) <= y && y <= iv.upper(xs);
                                 });
                               },
                               [&](const InequalityList& list) {
                                 return std::all_of(list.inequalities.begin(), list.inequalities.end(),
                                                    [&](const Expression& g) { return g(xs, y) <= 0.0; });
                               }},
                    rule);
}

}  // namespace

std::vector<int> rule_classes(const OutputRule& rule, const Eigen::VectorXd& x, int num_classes) {
  std::vector<int> out;
  for (int k = 0; k < num_classes; ++k) {
    if (rule_member(rule, x, k)) out.push_back(k);
  }
  return out;
}

std::vector<int> permitted_classes(const Constraint& c, const Eigen::VectorXd& x, int num_classes) {
  if (!c.deterministic()) throw ContractError("permitted_classes: constraint '" + c.id + "' is probabilistic");
  std::vector<int> out;
  for (int k = 0; k < num_classes; ++k) {
    if (satisfies(c, x, k)) out.push_back(k);
  }
  return out;
}

bool satisfies(const Constraint& c, const Eigen::VectorXd& x, double y) {
  if (!c.deterministic()) throw ContractError("satisfies: constraint '" + c.id + "' is probabilistic");
  const bool member = rule_member(*c.rule, x, y);
  return c.polarity == Polarity::positive ? member : !member;
}

Eigen::MatrixXd sample_region(const InputRegion& region, std::size_t count, Rng& rng, const SamplingLimits& limits) {
  if (count < 1) throw ContractError("sample_region: need at least one point");
  validate_region(region);
  const int q = region_dim(region);
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(count), q);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto draw_box = [&](const Box& b, Eigen::Index row) {
    if (!b.bounded()) throw ConfigError("cannot sample uniformly from an unbounded box");
    for (int j = 0; j < q; ++j) pts(row, j) = b.lower[j] + unit(rng) * (b.upper[j] - b.lower[j]);
  };

  std::visit(Overloaded{[&](const Box& b) {
                          for (Eigen::Index i = 0; i < pts.rows(); ++i) draw_box(b, i);
                        },
                        [&](const PredicateRegion& p) {
                          std::size_t proposals = 0, accepted = 0;
                          Eigen::VectorXd x(q);
                          while (accepted < count) {
                            for (int j = 0; j < q; ++j)
                              x[j] = p.bounds.lower[j] + unit(rng) * (p.bounds.upper[j] - p.bounds.lower[j]);
                            ++proposals;
                            if (p.indicator(x)) pts.row(static_cast<Eigen::Index>(accepted++)) = x.transpose();
                            if (proposals >= limits.max_proposals &&
                                static_cast<double>(accepted) / static_cast<double>(proposals) < limits.min_acceptance)
                              throw SamplingError("predicate region '" + p.name + "' accepted " +
                                                  std::to_string(accepted) + " of " + std::to_string(proposals) +
                                                  " proposals");
                          }
                        },
                        [&](const WholeSpace& s) {
                          if (s.sampling_box) {
                            for (Eigen::Index i = 0; i < pts.rows(); ++i) draw_box(*s.sampling_box, i);
                            return;
                          }
                          std::normal_distribution<double> step(0.0, s.walk_step_sd);
                          Eigen::VectorXd x = s.walk_start.size() == q ? s.walk_start : Eigen::VectorXd::Zero(q);
                          for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                            for (int j = 0; j < q; ++j) x[j] += step(rng);
                            pts.row(i) = x.transpose();
                          }
                        }},
             region);
  return pts;
}

ConstraintSample sample_region(const InputRegion& region, std::size_t count, std::uint64_t seed,
                               const SamplingLimits& limits) {
  Rng rng(seed);
  ConstraintSample s;
  s.points = sample_region(region, count, rng, limits);
  s.seed = seed;
  return s;
}

}  // namespace ocbnn
