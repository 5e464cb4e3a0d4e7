#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocbnn/network.hpp"

namespace ocbnn {

// --- synthetic toys -------------------------------------------------------------

enum class ToyKind { fig1_regression, fig2_threeclass, fig3a_xy, fig3b_gap, fig4_fairness, fig6_cosine };

std::string to_string(ToyKind kind);
ToyKind toy_from_string(const std::string& name);

/// Default noise sd and size per kind; negative noise_sd / zero n mean "use
/// the default".
struct ToyOptions {
  std::size_t n = 0;
  double noise_sd = -1.0;
};

/// Layouts (x ranges are the plotted ranges used by the presets):
///   fig1_regression  1D, n/2 points evenly in [-2, -1] and [1, 2], y = 0.5 x + 1 + noise
///   fig2_threeclass  2D, three Gaussian blobs (sd 0.5) at (-1.5, 1.5), (1.5, 1.5), (-1.5, -1.5)
///                    labelled 0, 1, 2
///   fig3a_xy         1D, x evenly in [-2, -0.5] and [0.5, 2], y = x + noise
///   fig3b_gap        1D, x evenly in [-2.5, -1.5] and [1.5, 2.5], y = 1.75 + noise
///   fig4_fairness    2D, x1 in {0, 1}, x2 ~ U[0, 1]; y = 1 iff x2 >= 0.8 (x1 = 1) or x2 >= 0.2 (x1 = 0)
///   fig6_cosine      1D, 6 points evenly in [-5, 5], y = 5 cos(x / 1.7) + N(0, noise_sd^2), noise_sd 1
Dataset gen_toy(ToyKind kind, std::uint64_t seed, const ToyOptions& options = {});
int toy_input_dim(ToyKind kind);

// --- tables and schemas ---------------------------------------------------------

enum class Transform { standardize, log_transform, none };
enum class Role { feature, target, group, ignore };

std::string to_string(Transform t);
std::string to_string(Role r);

struct FeatureSpec {
  std::string name;
  Transform transform = Transform::none;
  Role role = Role::feature;
};

/// Schema TOML: an array of [[columns]] tables with name, transform, role.
std::vector<FeatureSpec> parse_schema(const std::string& toml_text);
std::vector<FeatureSpec> load_schema(const std::string& path);
void validate_schema(const std::vector<FeatureSpec>& schema);

/// Raw numeric columns in schema order.
struct Table {
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // rows x schema columns
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  int column(const std::string& name) const;  // throws SchemaError if absent
  Eigen::VectorXd column_values(const std::string& name) const;
  Table subset(const std::vector<std::size_t>& rows) const;
};

/// RFC 4180 CSV with a header row. Rows with unparseable or missing cells are
/// dropped and counted.
Table load_csv(const std::string& path, const std::vector<FeatureSpec>& schema);
Table parse_csv(const std::string& text, const std::vector<FeatureSpec>& schema);
void write_csv(const std::string& path, const Table& table);

/// Columns with role `feature` in schema order, and the target column.
Dataset to_dataset(const Table& table, const std::vector<FeatureSpec>& schema);

// --- preprocessing --------------------------------------------------------------

struct FittedTransform {
  std::string name;
  Transform transform = Transform::none;
  double mean = 0.0;
  double sd = 1.0;
  bool sd_floored = false;

  double apply(double raw) const;
};

struct PreprocessRecord {
  std::vector<FittedTransform> features;  // feature columns in order

  int index(const std::string& name) const;  // -1 when absent
  /// Column name -> input index, for constraint expressions.
  std::map<std::string, int> aliases() const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw_features) const;
  std::string to_json() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
  Table raw_train;  // every schema column, untransformed, aligned with train rows
  Table raw_test;
  PreprocessRecord record;
  std::uint64_t seed = 0;
};

struct PreprocessOptions {
  double train_fraction = 0.8;  // in (0, 1]; 1 keeps every row in train and test
  bool upsample_minority = false;
  double sd_floor = 1e-8;
  /// Train rows (raw, every schema column) failing this are dropped before
  /// fitting and upsampling. Test rows are kept.
  std::function<bool(const Eigen::VectorXd& raw_row)> keep_train_row;
};

/// Seeded split, transforms fitted on the train rows only, then optional
/// minority upsampling of the train rows to class parity.
SplitDataset preprocess(const Table& table, const std::vector<FeatureSpec>& schema, const PreprocessOptions& options,
                        std::uint64_t seed);

/// Row indices that repeat every minority-class row evenly until both classes
/// have equal counts. Binary targets only.
std::vector<std::size_t> upsample_indices(const Eigen::VectorXd& targets, std::uint64_t seed);

// --- surrogate tables -------------------------------------------------------------

/// Clinical surrogate with columns MAP, age, urine, weight, creatinine,
/// lactate, bicarbonate, BUN, action. Features are on a standard-normal
/// scale; labels come from a logistic model in which high creatinine and BUN
/// with low urine, or high lactate with low bicarbonate, lower the action
/// logit, except inside those regions where action is 1.
Table gen_clinical_surrogate(std::size_t n, std::uint64_t seed);
std::vector<FeatureSpec> clinical_schema();

/// Credit surrogate with the ten Give-Me-Some-Credit feature columns plus
/// SeriousDlqin2yrs. Distress depends weakly on revolving utilisation for
/// borrowers under 35 and strongly for older ones.
Table gen_credit_surrogate(std::size_t n, std::uint64_t seed);
std::vector<FeatureSpec> credit_schema();

}  // namespace ocbnn
