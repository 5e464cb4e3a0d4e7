#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/error.hpp"
#include "ocbnn/expression.hpp"

namespace ocbnn {

using Rng = std::mt19937_64;

// --- input regions -----------------------------------------------------------

/// Axis-aligned box lower <= x <= upper.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Eigen::VectorXd& x) const;
  bool bounded() const { return lower.allFinite() && upper.allFinite(); }
};

/// Subset of a bounding box selected by an indicator. Sampled by rejection.
struct PredicateRegion {
  std::string name;
  std::function<bool(const Eigen::VectorXd&)> indicator;
  Box bounds;
};

/// The whole input space. Sampled uniformly from `sampling_box` when given,
/// otherwise by a Gaussian random walk from `walk_start`.
struct WholeSpace {
  int dim = 1;
  std::optional<Box> sampling_box;
  double walk_step_sd = 1.0;
  Eigen::VectorXd walk_start;  // defaults to the origin when empty
};

using InputRegion = std::variant<Box, PredicateRegion, WholeSpace>;

int region_dim(const InputRegion& region);
bool region_contains(const InputRegion& region, const Eigen::VectorXd& x);
void validate_region(const InputRegion& region);

/// Built-in named predicates usable from constraint files:
///   same_sign   x1 * x2 >= 0 (two-dimensional)
///   unit_ball   ||x|| <= 1
std::function<bool(const Eigen::VectorXd&)> named_predicate(const std::string& name);

/// Predicate "every h_i(x) <= 0".
std::function<bool(const Eigen::VectorXd&)> inequality_predicate(std::vector<Expression> inequalities);

// --- output rules ------------------------------------------------------------

/// Finite set of admissible (or forbidden) outputs; class indices for
/// classification. Values may depend on x.
struct ValueSet {
  std::vector<Expression> values;
};

/// Closed interval with x-dependent endpoints (either may be infinite).
struct Interval {
  Expression lower;
  Expression upper;
};

/// Ordered, disjoint union of intervals.
struct IntervalUnion {
  std::vector<Interval> intervals;
};

/// Membership in C_y(x) means every g_i(x, y) <= 0.
struct InequalityList {
  std::vector<Expression> inequalities;
};

using OutputRule = std::variant<ValueSet, IntervalUnion, InequalityList>;

// --- probabilistic targets ---------------------------------------------------

struct GaussianTarget {
  Expression mean;
  Expression sd;
};

struct BernoulliTarget {
  Expression p;  // probability of class 1
};

struct CategoricalTarget {
  std::vector<Expression> probs;
};

using TargetDistribution = std::variant<GaussianTarget, BernoulliTarget, CategoricalTarget>;

enum class Polarity { positive, negative, probabilistic };

std::string to_string(Polarity p);
Polarity polarity_from_string(const std::string& name);

struct Constraint {
  std::string id;
  InputRegion region;
  std::optional<OutputRule> rule;
  std::optional<TargetDistribution> target;
  Polarity polarity = Polarity::positive;

  bool deterministic() const { return polarity != Polarity::probabilistic; }
  void validate() const;
};

/// Same constraint with positive and negative polarity exchanged.
Constraint flip_polarity(const Constraint& c);

/// Numeric closed interval [lower, upper].
struct NumericInterval {
  double lower;
  double upper;
};

/// Intervals of C_y(x) evaluated at x, sorted. Inequality lists are supported
/// when every g_i is affine in y. Throws ContractError when the rule is
/// unordered/overlapping at x or not representable as intervals.
std::vector<NumericInterval> rule_intervals(const OutputRule& rule, const Eigen::VectorXd& x);

/// Complement of a sorted disjoint union within the real line.
std::vector<NumericInterval> complement(const std::vector<NumericInterval>& intervals);

/// Outputs permitted by a deterministic constraint at x (regression).
std::vector<NumericInterval> permitted_intervals(const Constraint& c, const Eigen::VectorXd& x);

/// Classes in C_y(x) for a value-set rule.
std::vector<int> rule_classes(const OutputRule& rule, const Eigen::VectorXd& x, int num_classes);

/// Classes permitted by a deterministic constraint at x.
std::vector<int> permitted_classes(const Constraint& c, const Eigen::VectorXd& x, int num_classes);

/// Whether an output y satisfies a deterministic constraint at x. For
/// classification y is the class index.
bool satisfies(const Constraint& c, const Eigen::VectorXd& x, double y);

// --- sampling ----------------------------------------------------------------

struct ConstraintSample {
  Eigen::MatrixXd points;  // T x Q
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
};

struct SamplingLimits {
  std::size_t max_proposals = 1'000'000;
  double min_acceptance = 1e-4;
};

/// Draw T points from the region, reproducibly for a given seed.
ConstraintSample sample_region(const InputRegion& region, std::size_t count, std::uint64_t seed,
                               const SamplingLimits& limits = {});

/// Same, continuing an existing random stream.
Eigen::MatrixXd sample_region(const InputRegion& region, std::size_t count, Rng& rng,
                              const SamplingLimits& limits = {});

// --- constraint files --------------------------------------------------------

/// Parse constraints from TOML text (an array of [[constraints]] tables).
/// `aliases` maps column names to 0-based input indices for expressions.
std::vector<Constraint> parse_constraints(const std::string& toml_text, int input_dim,
                                          const std::map<std::string, int>& aliases = {});
std::vector<Constraint> load_constraint_file(const std::string& path, int input_dim,
                                             const std::map<std::string, int>& aliases = {});

}  // namespace ocbnn
