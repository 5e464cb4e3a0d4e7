#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/constraints.hpp"
#include "ocbnn/inference.hpp"
#include "ocbnn/network.hpp"

namespace ocbnn {

/// Fraction of points whose point prediction (argmax class or predictive
/// mean) breaks a deterministic constraint.
double violation_fraction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                          const Eigen::MatrixXd& points);
double violation_fraction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c, std::size_t n_points,
                          Rng& rng);
/// Several constraints at once: a point violates when it lies in the region
/// of any constraint it breaks.
double violation_fraction(const PosteriorSamples& samples, const Mlp& mlp, const std::vector<Constraint>& cs,
                          const Eigen::MatrixXd& points);

/// Fraction of points at which the predictive median satisfies `c`
/// (regression).
double median_satisfaction_fraction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                                    const Eigen::MatrixXd& points);

/// Posterior predictive mass on outputs satisfying `c` at x. Regression mass
/// averages, over samples, the N(mean_i, noise_sd^2) mass of the permitted
/// intervals.
double epsilon_satisfaction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                            const Eigen::VectorXd& x);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Binary labels; F1 = 2TP / (2TP + FP + FN), 0 when the denominator is 0.
ClassificationMetrics classification_metrics(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

struct GroupFractions {
  double group1 = 0.0;
  double group0 = 0.0;
  double gap = 0.0;  // |group1 - group0|
  double ratio() const { return group1 / group0; }
};

GroupFractions group_positive_fraction(const Eigen::VectorXd& predictions, const Eigen::VectorXd& group);

/// mean(feature | prediction 1, mask) - mean(feature | prediction 0, mask).
double effort_of_recourse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& feature,
                          const std::vector<bool>& mask);

struct RejectionResult {
  PosteriorSamples accepted;
  double rejection_rate = 0.0;
};

/// Keeps samples whose own prediction satisfies `c` at every check point.
RejectionResult rejection_sample(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                                 const Eigen::MatrixXd& check_points);

inline constexpr int kMetricSchemaVersion = 1;

struct MetricEntry {
  std::string name;
  double value = 0.0;
  std::string split;
  std::string constraint;  // empty when not constraint specific
  std::size_t n = 0;
};

/// Named scalar metrics serialised as
///   {"schema_version": 1, "config_hash": "...",
///    "metrics": {"<name>": {"value", "split", "constraint", "n"}}}
class MetricReport {
 public:
  void add(MetricEntry entry);
  void add(const std::string& name, double value, const std::string& split, std::size_t n,
           const std::string& constraint = "");
  const std::vector<MetricEntry>& entries() const { return entries_; }
  std::optional<MetricEntry> find(const std::string& name) const;

  std::string to_json(const std::string& config_hash) const;
  static MetricReport from_json(const std::string& text, std::string* config_hash = nullptr);

 private:
  std::vector<MetricEntry> entries_;
};

}  // namespace ocbnn
