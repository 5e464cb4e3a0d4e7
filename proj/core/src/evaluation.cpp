#include "ocbnn/evaluation.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace ocbnn {

namespace {

void require_deterministic(const Constraint& c, const char* what) {
  if (!c.deterministic()) throw ContractError(std::string(what) + ": constraint '" + c.id + "' is probabilistic");
}

// Per-sample point prediction at every row of `points` (S x N).
Eigen::MatrixXd sample_point_predictions(const PosteriorSamples& samples, const Mlp& mlp,
                                         const Eigen::MatrixXd& points) {
  const auto s = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd out(s, points.rows());
  const Task task = mlp.arch().task;
  for (Eigen::Index i = 0; i < s; ++i) {
    const Eigen::MatrixXd v = mlp.predict(samples.samples.row(i).transpose(), points);
    for (Eigen::Index j = 0; j < points.rows(); ++j) {
      if (task == Task::regression) {
        out(i, j) = v(j, 0);
      } else if (task == Task::binary_logit) {
        out(i, j) = v(j, 0) > 0.5 ? 1.0 : 0.0;
      } else {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < v.cols(); ++k)
          if (v(j, k) > v(j, best)) best = k;
        out(i, j) = static_cast<double>(best);
      }
    }
  }
  return out;
}

}  // namespace

double violation_fraction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                          const Eigen::MatrixXd& points) {
  require_deterministic(c, "violation_fraction");
  if (points.rows() == 0) throw MetricError("violation_fraction: no points");
  const auto summary = posterior_predictive(samples, mlp, points);
  const Eigen::VectorXd pred = point_predictions(summary, mlp.arch().task);
  std::size_t violated = 0;
  for (Eigen::Index j = 0; j < points.rows(); ++j)
    if (!satisfies(c, points.row(j).transpose(), pred[j])) ++violated;
  return static_cast<double>(violated) / static_cast<double>(points.rows());
}

double violation_fraction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c, std::size_t n_points,
                          Rng& rng) {
  return violation_fraction(samples, mlp, c, sample_region(c.region, n_points, rng));
}

double violation_fraction(const PosteriorSamples& samples, const Mlp& mlp, const std::vector<Constraint>& cs,
                          const Eigen::MatrixXd& points) {
  if (cs.empty()) throw ContractError("violation_fraction: no constraints");
  for (const auto& c : cs) require_deterministic(c, "violation_fraction");
  if (points.rows() == 0) throw MetricError("violation_fraction: no points");
  const auto summary = posterior_predictive(samples, mlp, points);
  const Eigen::VectorXd pred = point_predictions(summary, mlp.arch().task);
  std::size_t violated = 0;
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    const Eigen::VectorXd x = points.row(j).transpose();
    for (const auto& c : cs) {
      if (region_contains(c.region, x) && !satisfies(c, x, pred[j])) {
        ++violated;
        break;
      }
    }
  }
  return static_cast<double>(violated) / static_cast<double>(points.rows());
}

double median_satisfaction_fraction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                                    const Eigen::MatrixXd& points) {
  require_deterministic(c, "median_satisfaction_fraction");
  if (mlp.arch().task != Task::regression) throw ContractError("median_satisfaction_fraction: regression only");
  if (points.rows() == 0) throw MetricError("median_satisfaction_fraction: no points");
  const auto summary = posterior_predictive(samples, mlp, points, {0.5});
  std::size_t ok = 0;
  for (Eigen::Index j = 0; j < points.rows(); ++j)
    if (satisfies(c, points.row(j).transpose(), summary.quantiles(j, 0))) ++ok;
  return static_cast<double>(ok) / static_cast<double>(points.rows());
}

double epsilon_satisfaction(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                            const Eigen::VectorXd& x) {
  require_deterministic(c, "epsilon_satisfaction");
  const NetworkArch& arch = mlp.arch();
  Eigen::MatrixXd point(1, x.size());
  point.row(0) = x.transpose();
  const auto summary = posterior_predictive(samples, mlp, point);
  if (arch.task != Task::regression) {
    double mass = 0.0;
    for (int k : permitted_classes(c, x, static_cast<int>(summary.probabilities.cols())))
      mass += summary.probabilities(0, k);
    return mass;
  }
  const auto intervals = permitted_intervals(c, x);
  const double sd = arch.noise_sd;
  double mass = 0.0;
  for (Eigen::Index i = 0; i < summary.sample_outputs.rows(); ++i) {
    const double m = summary.sample_outputs(i, 0);
    for (const auto& iv : intervals) {
      if (sd > 0.0) {
        mass += 0.5 * (std::erfc(-(iv.upper - m) / (sd * std::sqrt(2.0))) -
                       std::erfc(-(iv.lower - m) / (sd * std::sqrt(2.0))));
      } else if (m >= iv.lower && m <= iv.upper) {
        mass += 1.0;
      }
    }
  }
  return mass / static_cast<double>(summary.sample_outputs.rows());
}

ClassificationMetrics classification_metrics(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  if (predictions.size() != targets.size()) throw ShapeError("classification_metrics: length mismatch");
  if (predictions.size() == 0) throw MetricError("classification_metrics: no predictions");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] > 0.5, t = targets[i] > 0.5;
    if (p == t) ++correct;
    if (p && t) ++tp;
    if (p && !t) ++fp;
    if (!p && t) ++fn;
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  const std::size_t denom = 2 * tp + fp + fn;
  m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  return m;
}

GroupFractions group_positive_fraction(const Eigen::VectorXd& predictions, const Eigen::VectorXd& group) {
  if (predictions.size() != group.size()) throw ShapeError("group_positive_fraction: length mismatch");
  double pos[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const int g = group[i] > 0.5 ? 1 : 0;
    ++count[g];
    if (predictions[i] > 0.5) pos[g] += 1.0;
  }
  if (count[1] == 0) throw MetricError("group_positive_fraction: group 1 is empty");
  if (count[0] == 0) throw MetricError("group_positive_fraction: group 0 is empty");
  GroupFractions f;
  f.group1 = pos[1] / static_cast<double>(count[1]);
  f.group0 = pos[0] / static_cast<double>(count[0]);
  f.gap = std::abs(f.group1 - f.group0);
  return f;
}

double effort_of_recourse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& feature,
                          const std::vector<bool>& mask) {
  if (predictions.size() != feature.size() || static_cast<std::size_t>(predictions.size()) != mask.size())
    throw ShapeError("effort_of_recourse: length mismatch");
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int y = predictions[i] > 0.5 ? 1 : 0;
    sum[y] += feature[i];
    ++count[y];
  }
  if (count[0] == 0 || count[1] == 0)
    throw MetricError("effort_of_recourse: the subset has only predicted class " +
                      std::string(count[0] == 0 ? "1" : "0"));
  return sum[1] / static_cast<double>(count[1]) - sum[0] / static_cast<double>(count[0]);
}

RejectionResult rejection_sample(const PosteriorSamples& samples, const Mlp& mlp, const Constraint& c,
                                 const Eigen::MatrixXd& check_points) {
  require_deterministic(c, "rejection_sample");
  samples.validate();
  const Eigen::MatrixXd pred = sample_point_predictions(samples, mlp, check_points);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    bool ok = true;
    for (Eigen::Index j = 0; j < check_points.rows() && ok; ++j)
      ok = satisfies(c, check_points.row(j).transpose(), pred(i, j));
    if (ok) keep.push_back(i);
  }
  RejectionResult r;
  r.accepted.method = samples.method;
  r.accepted.seed = samples.seed;
  r.accepted.samples.resize(static_cast<Eigen::Index>(keep.size()), samples.samples.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    r.accepted.samples.row(static_cast<Eigen::Index>(k)) = samples.samples.row(keep[k]);
    if (!samples.log_posterior.empty())
      r.accepted.log_posterior.push_back(samples.log_posterior[static_cast<std::size_t>(keep[k])]);
  }
  r.rejection_rate = 1.0 - static_cast<double>(keep.size()) / static_cast<double>(samples.size());
  return r;
}

void MetricReport::add(MetricEntry entry) {
  for (auto& e : entries_) {
    if (e.name == entry.name) {
      e = std::move(entry);
      return;
    }
  }
  entries_.push_back(std::move(entry));
}

void MetricReport::add(const std::string& name, double value, const std::string& split, std::size_t n,
                       const std::string& constraint) {
  add(MetricEntry{name, value, split, constraint, n});
}

std::optional<MetricEntry> MetricReport::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  return std::nullopt;
}

std::string MetricReport::to_json(const std::string& config_hash) const {
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& e : entries_) {
    metrics[e.name] = {{"value", e.value}, {"split", e.split}, {"constraint", e.constraint}, {"n", e.n}};
  }
  nlohmann::ordered_json root;
  root["schema_version"] = kMetricSchemaVersion;
  root["config_hash"] = config_hash;
  root["metrics"] = metrics;
  return root.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text, std::string* config_hash) {
  nlohmann::ordered_json root;
  try {
    root = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("metrics: ") + e.what());
  }
  if (root.value("schema_version", 0) != kMetricSchemaVersion) throw SchemaError("metrics: unsupported schema version");
  if (config_hash) *config_hash = root.value("config_hash", "");
  MetricReport r;
  for (const auto& [name, v] : root.at("metrics").items()) {
    r.add(MetricEntry{name, v.at("value").get<double>(), v.value("split", ""), v.value("constraint", ""),
                      v.value("n", std::size_t{0})});
  }
  return r;
}

}  // namespace ocbnn
