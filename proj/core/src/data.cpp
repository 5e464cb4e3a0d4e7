#include "ocbnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ocbnn/constraints.hpp"
#include "toml_util.hpp"

namespace ocbnn {

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = 0.5 * (lo + hi);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

// Points split between two intervals, the first taking the extra point when n is odd.
std::vector<double> two_clusters(double a0, double a1, double b0, double b1, std::size_t n) {
  const std::size_t first = (n + 1) / 2;
  auto out = linspace(a0, a1, first);
  if (n > first) {
    const auto second = linspace(b0, b1, n - first);
    out.insert(out.end(), second.begin(), second.end());
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool parse_number(const std::string& cell, double& out) {
  std::size_t b = 0, e = cell.size();
  while (b < e && std::isspace(static_cast<unsigned char>(cell[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(cell[e - 1]))) --e;
  if (b == e) return false;
  const char* first = cell.data() + b;
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + e, out);
  return ec == std::errc() && ptr == cell.data() + e && std::isfinite(out);
}

// RFC 4180 records: quoted fields may hold commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> split_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        records.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
    } else {
      cell += ch;
      any = true;
    }
  }
  if (quoted) throw SchemaError("csv: unterminated quoted field");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    records.push_back(std::move(row));
  }
  return records;
}

Transform transform_from_string(const std::string& s) {
  if (s == "standardize") return Transform::standardize;
  if (s == "log_transform") return Transform::log_transform;
  if (s == "none") return Transform::none;
  throw SchemaError("unknown transform '" + s + "'");
}

Role role_from_string(const std::string& s) {
  if (s == "feature") return Role::feature;
  if (s == "target") return Role::target;
  if (s == "group") return Role::group;
  if (s == "ignore") return Role::ignore;
  throw SchemaError("unknown role '" + s + "'");
}

std::vector<std::size_t> feature_columns(const std::vector<FeatureSpec>& schema) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (schema[i].role == Role::feature) out.push_back(i);
  return out;
}

std::size_t target_column(const std::vector<FeatureSpec>& schema) {
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (schema[i].role == Role::target) return i;
  throw SchemaError("schema has no target column");
}

Table make_table(const std::vector<FeatureSpec>& schema, Eigen::MatrixXd values) {
  Table t;
  for (const auto& f : schema) t.names.push_back(f.name);
  t.values = std::move(values);
  return t;
}

}  // namespace

// --- toys --------------------------------------------------------------------------

std::string to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::fig1_regression:
      return "fig1_regression";
    case ToyKind::fig2_threeclass:
      return "fig2_threeclass";
    case ToyKind::fig3a_xy:
      return "fig3a_xy";
    case ToyKind::fig3b_gap:
      return "fig3b_gap";
    case ToyKind::fig4_fairness:
      return "fig4_fairness";
    case ToyKind::fig6_cosine:
      return "fig6_cosine";
  }
  return "";
}

ToyKind toy_from_string(const std::string& name) {
  for (ToyKind k : {ToyKind::fig1_regression, ToyKind::fig2_threeclass, ToyKind::fig3a_xy, ToyKind::fig3b_gap,
                    ToyKind::fig4_fairness, ToyKind::fig6_cosine})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown toy kind '" + name + "'");
}

int toy_input_dim(ToyKind kind) {
  return kind == ToyKind::fig2_threeclass || kind == ToyKind::fig4_fairness ? 2 : 1;
}

Dataset gen_toy(ToyKind kind, std::uint64_t seed, const ToyOptions& options) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto pick = [&](std::size_t n_default, double sd_default) {
    return std::pair{options.n == 0 ? n_default : options.n, options.noise_sd < 0.0 ? sd_default : options.noise_sd};
  };
  Dataset d;
  const auto fill_1d = [&](const std::vector<double>& xs, double sd, auto&& truth) {
    d.inputs.resize(static_cast<Eigen::Index>(xs.size()), 1);
    d.targets.resize(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      d.inputs(r, 0) = xs[i];
      d.targets[r] = truth(xs[i]) + sd * normal(rng);
    }
  };

  switch (kind) {
    case ToyKind::fig1_regression: {
      const auto [n, sd] = pick(10, 0.1);
      fill_1d(two_clusters(-2.0, -1.0, 1.0, 2.0, n), sd, [](double x) { return 0.5 * x + 1.0; });
      break;
    }
    case ToyKind::fig3a_xy: {
      const auto [n, sd] = pick(10, 0.1);
      fill_1d(two_clusters(-2.0, -0.5, 0.5, 2.0, n), sd, [](double x) { return x; });
      break;
    }
    case ToyKind::fig3b_gap: {
      const auto [n, sd] = pick(10, 0.1);
      fill_1d(two_clusters(-2.5, -1.5, 1.5, 2.5, n), sd, [](double) { return 1.75; });
      break;
    }
    case ToyKind::fig6_cosine: {
      const auto [n, sd] = pick(6, 1.0);
      fill_1d(linspace(-5.0, 5.0, n), sd, [](double x) { return 5.0 * std::cos(x / 1.7); });
      break;
    }
    case ToyKind::fig2_threeclass: {
      const auto [n, sd] = pick(60, 0.5);
      const double cx[3] = {-1.5, 1.5, -1.5}, cy[3] = {1.5, 1.5, -1.5};
      d.inputs.resize(static_cast<Eigen::Index>(n), 2);
      d.targets.resize(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const std::size_t k = i % 3;
        d.inputs(r, 0) = cx[k] + sd * normal(rng);
        d.inputs(r, 1) = cy[k] + sd * normal(rng);
        d.targets[r] = static_cast<double>(k);
      }
      break;
    }
    case ToyKind::fig4_fairness: {
      const auto [n, sd] = pick(60, 0.0);
      (void)sd;
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      d.inputs.resize(static_cast<Eigen::Index>(n), 2);
      d.targets.resize(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double x1 = static_cast<double>(i % 2);
        const double x2 = unif(rng);
        d.inputs(r, 0) = x1;
        d.inputs(r, 1) = x2;
        d.targets[r] = (x1 == 1.0 ? x2 >= 0.8 : x2 >= 0.2) ? 1.0 : 0.0;
      }
      break;
    }
  }
  return d;
}

// --- schemas and tables --------------------------------------------------------------

std::string to_string(Transform t) {
  switch (t) {
    case Transform::standardize:
      return "standardize";
    case Transform::log_transform:
      return "log_transform";
    case Transform::none:
      return "none";
  }
  return "";
}

std::string to_string(Role r) {
  switch (r) {
    case Role::feature:
      return "feature";
    case Role::target:
      return "target";
    case Role::group:
      return "group";
    case Role::ignore:
      return "ignore";
  }
  return "";
}

std::vector<FeatureSpec> parse_schema(const std::string& toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw SchemaError(std::string("schema: ") + std::string(e.description()));
  }
  const auto* cols = root["columns"].as_array();
  if (!cols) throw SchemaError("schema: missing [[columns]]");
  std::vector<FeatureSpec> out;
  for (const auto& node : *cols) {
    const auto* t = node.as_table();
    if (!t) throw SchemaError("schema: every columns entry must be a table");
    FeatureSpec f;
    try {
      f.name = detail::require_string(*t, "name", "schema column");
      f.transform = transform_from_string(detail::get_string(*t, "transform", "none"));
      f.role = role_from_string(detail::get_string(*t, "role", "feature"));
    } catch (const ConfigError& e) {
      throw SchemaError(e.what());
    }
    out.push_back(std::move(f));
  }
  validate_schema(out);
  return out;
}

std::vector<FeatureSpec> load_schema(const std::string& path) { return parse_schema(read_file(path)); }

void validate_schema(const std::vector<FeatureSpec>& schema) {
  std::size_t targets = 0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name.empty()) throw SchemaError("schema: column " + std::to_string(i) + " has no name");
    for (std::size_t j = 0; j < i; ++j)
      if (schema[j].name == schema[i].name) throw SchemaError("schema: duplicate column '" + schema[i].name + "'");
    if (schema[i].role == Role::target) ++targets;
  }
  if (targets != 1) throw SchemaError("schema: expected exactly one target column, found " + std::to_string(targets));
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw SchemaError("table has no column '" + name + "'");
}

Eigen::VectorXd Table::column_values(const std::string& name) const { return values.col(column(name)); }

Table Table::subset(const std::vector<std::size_t>& rows) const {
  Table t;
  t.names = names;
  t.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= this->rows()) throw ShapeError("Table::subset: row index out of range");
    t.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
  }
  return t;
}

Table parse_csv(const std::string& text, const std::vector<FeatureSpec>& schema) {
  validate_schema(schema);
  const auto records = split_records(text);
  if (records.empty()) throw SchemaError("csv: missing header row");
  const auto& header = records[0];
  std::vector<std::size_t> source(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), schema[c].name);
    if (it == header.end()) throw SchemaError("csv: missing column '" + schema[c].name + "'");
    source[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> flat;
  std::size_t kept = 0, dropped = 0;
  std::vector<double> row(schema.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    bool ok = rec.size() == header.size();
    for (std::size_t c = 0; ok && c < schema.size(); ++c) ok = parse_number(rec[source[c]], row[c]);
    if (!ok) {
      ++dropped;
      continue;
    }
    flat.insert(flat.end(), row.begin(), row.end());
    ++kept;
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t r = 0; r < kept; ++r)
    for (std::size_t c = 0; c < schema.size(); ++c)
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * schema.size() + c];
  Table t = make_table(schema, std::move(values));
  t.dropped_rows = dropped;
  return t;
}

Table load_csv(const std::string& path, const std::vector<FeatureSpec>& schema) {
  return parse_csv(read_file(path), schema);
}

void write_csv(const std::string& path, const Table& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  for (std::size_t c = 0; c < table.names.size(); ++c) out << (c ? "," : "") << table.names[c];
  out << "\n" << std::setprecision(17);
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) out << (c ? "," : "") << table.values(r, c);
    out << "\n";
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

Dataset to_dataset(const Table& table, const std::vector<FeatureSpec>& schema) {
  validate_schema(schema);
  const auto feats = feature_columns(schema);
  Dataset d;
  d.inputs.resize(table.values.rows(), static_cast<Eigen::Index>(feats.size()));
  for (std::size_t j = 0; j < feats.size(); ++j) d.inputs.col(static_cast<Eigen::Index>(j)) = table.column_values(schema[feats[j]].name);
  d.targets = table.column_values(schema[target_column(schema)].name);
  return d;
}

// --- preprocessing -----------------------------------------------------------------

double FittedTransform::apply(double raw) const {
  switch (transform) {
    case Transform::standardize:
      return (raw - mean) / sd;
    case Transform::log_transform:
      if (raw <= -1.0) throw SchemaError("log_transform: column '" + name + "' has a value <= -1");
      return std::log1p(raw);
    case Transform::none:
      return raw;
  }
  return raw;
}

int PreprocessRecord::index(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].name == name) return static_cast<int>(i);
  return -1;
}

std::map<std::string, int> PreprocessRecord::aliases() const {
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < features.size(); ++i) out[features[i].name] = static_cast<int>(i);
  return out;
}

Eigen::MatrixXd PreprocessRecord::apply(const Eigen::MatrixXd& raw_features) const {
  if (static_cast<std::size_t>(raw_features.cols()) != features.size())
    throw ShapeError("PreprocessRecord::apply: expected " + std::to_string(features.size()) + " feature columns");
  Eigen::MatrixXd out(raw_features.rows(), raw_features.cols());
  for (Eigen::Index c = 0; c < raw_features.cols(); ++c)
    for (Eigen::Index r = 0; r < raw_features.rows(); ++r)
      out(r, c) = features[static_cast<std::size_t>(c)].apply(raw_features(r, c));
  return out;
}

std::string PreprocessRecord::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& f : features)
    arr.push_back({{"name", f.name},
                   {"transform", to_string(f.transform)},
                   {"mean", f.mean},
                   {"sd", f.sd},
                   {"sd_floored", f.sd_floored}});
  return nlohmann::ordered_json{{"features", arr}}.dump(2);
}

std::vector<std::size_t> upsample_indices(const Eigen::VectorXd& targets, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const double y = targets[i];
    if (y != 0.0 && y != 1.0) throw ContractError("upsample_indices: targets must be 0 or 1");
    by_class[y == 1.0 ? 1 : 0].push_back(static_cast<std::size_t>(i));
  }
  if (by_class[0].empty() || by_class[1].empty()) throw ContractError("upsample_indices: a class has no rows");
  std::vector<std::size_t> out(static_cast<std::size_t>(targets.size()));
  std::iota(out.begin(), out.end(), std::size_t{0});
  const int minority = by_class[1].size() < by_class[0].size() ? 1 : 0;
  const auto& rows = by_class[minority];
  const std::size_t extra = by_class[1 - minority].size() - rows.size();
  for (std::size_t k = 0; k < extra / rows.size(); ++k) out.insert(out.end(), rows.begin(), rows.end());
  std::vector<std::size_t> rest = rows;
  Rng rng(seed);
  std::shuffle(rest.begin(), rest.end(), rng);
  rest.resize(extra % rows.size());
  std::sort(rest.begin(), rest.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

SplitDataset preprocess(const Table& table, const std::vector<FeatureSpec>& schema, const PreprocessOptions& options,
                        std::uint64_t seed) {
  validate_schema(schema);
  if (!(options.train_fraction > 0.0 && options.train_fraction <= 1.0))
    throw ContractError("preprocess: train_fraction must lie in (0, 1]");
  if (table.names.size() != schema.size()) throw SchemaError("preprocess: table does not match the schema");
  const std::size_t n = table.rows();
  if (n == 0) throw SchemaError("preprocess: no rows");

  std::vector<std::size_t> train_rows, test_rows;
  if (options.train_fraction == 1.0) {
    train_rows.resize(n);
    std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
    test_rows = train_rows;
  } else {
    if (n < 2) throw ContractError("preprocess: a split needs at least two rows");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
  }
  if (options.keep_train_row) {
    std::erase_if(train_rows, [&](std::size_t r) {
      return !options.keep_train_row(table.values.row(static_cast<Eigen::Index>(r)).transpose());
    });
    if (train_rows.empty()) throw SchemaError("preprocess: the train filter removed every row");
  }

  SplitDataset out;
  out.seed = seed;
  out.raw_train = table.subset(train_rows);
  out.raw_test = table.subset(test_rows);

  for (std::size_t c : feature_columns(schema)) {
    FittedTransform f;
    f.name = schema[c].name;
    f.transform = schema[c].transform;
    if (f.transform == Transform::standardize) {
      const Eigen::VectorXd col = out.raw_train.values.col(static_cast<Eigen::Index>(c));
      f.mean = col.mean();
      f.sd = std::sqrt((col.array() - f.mean).square().mean());
      if (!(f.sd >= options.sd_floor)) {
        std::cerr << "warning: column '" << f.name << "' has near-zero variance; sd floored at " << options.sd_floor
                  << "\n";
        f.sd = options.sd_floor;
        f.sd_floored = true;
      }
    }
    out.record.features.push_back(f);
  }

  const auto transformed = [&](const Table& raw) {
    Dataset d = to_dataset(raw, schema);
    d.inputs = out.record.apply(d.inputs);
    return d;
  };
  if (options.upsample_minority) {
    const auto idx = upsample_indices(out.raw_train.column_values(schema[target_column(schema)].name), seed);
    out.raw_train = out.raw_train.subset(idx);
  }
  out.train = transformed(out.raw_train);
  out.test = transformed(out.raw_test);
  return out;
}

// --- surrogates ------------------------------------------------------------------

std::vector<FeatureSpec> clinical_schema() {
  std::vector<FeatureSpec> s;
  for (const char* name : {"MAP", "age", "urine", "weight", "creatinine", "lactate", "bicarbonate", "BUN"})
    s.push_back({name, Transform::standardize, Role::feature});
  s.push_back({"action", Transform::none, Role::target});
  return s;
}

Table gen_clinical_surrogate(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), 9);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (int c = 0; c < 8; ++c) v(i, c) = normal(rng);
    const double map = v(i, 0), age = v(i, 1), urine = v(i, 2), creat = v(i, 4), lactate = v(i, 5),
                 bicarb = v(i, 6), bun = v(i, 7);
    const bool renal = creat > 1.0 && bun > 1.0 && urine < -1.0;
    const bool acidosis = lactate > 1.0 && bicarb < -1.0;
    double y;
    if (renal || acidosis) {
      y = 1.0;
    } else {
      const double logit = -1.0 - 1.5 * map - 0.6 * creat - 0.6 * bun + 0.6 * urine - 0.6 * lactate +
                           0.6 * bicarb + 0.2 * age;
      y = unif(rng) < sigmoid(logit) ? 1.0 : 0.0;
    }
    v(i, 8) = y;
  }
  return make_table(clinical_schema(), std::move(v));
}

std::vector<FeatureSpec> credit_schema() {
  return {
      {"RevolvingUtilizationOfUnsecuredLines", Transform::none, Role::feature},
      {"age", Transform::standardize, Role::feature},
      {"DebtRatio", Transform::none, Role::feature},
      {"MonthlyIncome", Transform::standardize, Role::feature},
      {"NumberOfOpenCreditLinesAndLoans", Transform::standardize, Role::feature},
      {"NumberRealEstateLoansOrLines", Transform::none, Role::feature},
      {"NumberOfTime30-59DaysPastDueNotWorse", Transform::none, Role::feature},
      {"NumberOfTime60-89DaysPastDueNotWorse", Transform::none, Role::feature},
      {"NumberOfTimes90DaysLate", Transform::none, Role::feature},
      {"NumberOfDependents", Transform::none, Role::feature},
      {"SeriousDlqin2yrs", Transform::none, Role::target},
  };
}

Table gen_credit_surrogate(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> age_dist(52.0, 15.0);
  std::gamma_distribution<double> ruul_dist(0.8, 0.35), debt_dist(1.2, 0.3);
  std::lognormal_distribution<double> income_dist(8.5, 0.6);
  std::poisson_distribution<int> open_dist(8.0), estate_dist(1.0), late30(0.3), late60(0.1), late90(0.15),
      dependents(0.8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), 11);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double age = std::round(std::clamp(age_dist(rng), 21.0, 95.0));
    const double ruul = std::min(ruul_dist(rng), 2.0);
    v(i, 0) = ruul;
    v(i, 1) = age;
    v(i, 2) = debt_dist(rng);
    v(i, 3) = std::round(income_dist(rng));
    v(i, 4) = open_dist(rng);
    v(i, 5) = estate_dist(rng);
    v(i, 6) = late30(rng);
    v(i, 7) = late60(rng);
    v(i, 8) = late90(rng);
    v(i, 9) = dependents(rng);
    const double beta = age < 35.0 ? 0.6 : 3.0;
    const double logit = -3.2 + beta * (ruul - 0.35) + 0.5 * v(i, 6) + 0.8 * v(i, 7) + 1.0 * v(i, 8) +
                         0.3 * (v(i, 2) - 0.36);
    v(i, 10) = unif(rng) < sigmoid(logit) ? 1.0 : 0.0;
  }
  return make_table(credit_schema(), std::move(v));
}

}  // namespace ocbnn
