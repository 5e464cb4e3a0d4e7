#include "ocbnn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ocbnn/aocp.hpp"
#include "ocbnn/optim.hpp"
#include "ocbnn/priors.hpp"
#include "ocbnn/serialization.hpp"
#include "toml_util.hpp"

namespace fs = std::filesystem;

namespace ocbnn {

namespace {

using detail::get_bool;
using detail::get_double;
using detail::get_int;
using detail::get_string;
using detail::get_table;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kData = 1, kConstraintSample, kAocp, kInference, kEval };

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string to_text(const toml::table& t) {
  std::ostringstream ss;
  ss << t;
  return ss.str() + "\n";
}

// --- config editing ------------------------------------------------------------

template <typename Container, typename Key>
void assign_node(Container& c, const Key& key, const toml::node& value) {
  value.visit([&](const auto& n) {
    if constexpr (std::is_same_v<Container, toml::table>) {
      c.insert_or_assign(key, n);
    } else {
      c.replace(c.cbegin() + static_cast<std::ptrdiff_t>(key), n);
    }
  });
}

void set_path(toml::table& root, const std::string& path, const std::string& literal) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty()) throw ConfigError("empty parameter path");

  toml::table parsed;
  try {
    parsed = toml::parse("v = " + literal);
  } catch (const toml::parse_error&) {
    parsed.insert_or_assign("v", literal);
  }
  const toml::node& value = *parsed.get("v");

  toml::node* cur = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    const std::string& key = parts[i];
    if (auto* t = cur->as_table()) {
      cur = t->get(key);
      if (!cur) throw ConfigError("parameter path '" + path + "': no table '" + key + "'");
    } else if (auto* a = cur->as_array()) {
      const auto idx = std::stoul(key);
      if (idx >= a->size()) throw ConfigError("parameter path '" + path + "': index " + key + " out of range");
      cur = a->get(idx);
    } else {
      throw ConfigError("parameter path '" + path + "': '" + key + "' is not a table or array");
    }
  }
  const std::string& leaf = parts.back();
  if (auto* t = cur->as_table()) {
    assign_node(*t, leaf, value);
  } else if (auto* a = cur->as_array()) {
    const auto idx = std::stoul(leaf);
    if (idx >= a->size()) throw ConfigError("parameter path '" + path + "': index out of range");
    assign_node(*a, idx, value);
  } else {
    throw ConfigError("parameter path '" + path + "' does not name a table entry");
  }
}

void absolutize(toml::table& t, const std::string& key, const fs::path& base) {
  if (const auto* v = t.get_as<std::string>(key)) {
    fs::path p(v->get());
    if (p.is_relative()) t.insert_or_assign(key, (base / p).lexically_normal().string());
  }
}

// --- data --------------------------------------------------------------------------

// One evaluation split: model inputs plus the raw columns used by group,
// feature and mask expressions.
struct View {
  Dataset data;
  Eigen::MatrixXd raw;
  std::map<std::string, int> raw_aliases;
};

struct LoadedData {
  bool tabular = false;
  View train;
  View test;
  std::optional<PreprocessRecord> record;
  std::vector<std::string> feature_names;
};

std::vector<FeatureSpec> schema_for(const toml::table& d) {
  const std::string source = get_string(d, "source", "toy");
  if (source == "csv") return load_schema(detail::require_string(d, "schema", "data"));
  const std::string which = detail::require_string(d, "surrogate", "data");
  if (which == "clinical") return clinical_schema();
  if (which == "credit") return credit_schema();
  throw ConfigError("data: unknown surrogate '" + which + "'");
}

bool all_nonpositive(const std::vector<Expression>& exprs, const Eigen::VectorXd& row) {
  const std::span<const double> x(row.data(), static_cast<std::size_t>(row.size()));
  for (const auto& e : exprs)
    if (!(e(x) <= 0.0)) return false;
  return true;
}

std::vector<Expression> expression_list(const toml::table& t, const std::string& key,
                                        const std::map<std::string, int>& aliases, const std::string& ctx) {
  std::vector<Expression> out;
  const auto* node = t.get(key);
  if (!node) return out;
  if (const auto* arr = node->as_array()) {
    for (const auto& e : *arr) out.push_back(detail::to_expression(e, aliases, ctx));
  } else {
    out.push_back(detail::to_expression(*node, aliases, ctx));
  }
  return out;
}

LoadedData load_data(const toml::table& d, std::uint64_t seed) {
  LoadedData out;
  const std::string source = get_string(d, "source", "toy");
  const auto data_seed = static_cast<std::uint64_t>(get_int(d, "seed", static_cast<std::int64_t>(derive_seed(seed, kData) >> 1)));
  if (source == "toy") {
    ToyOptions opts;
    opts.n = static_cast<std::size_t>(get_int(d, "n", 0));
    opts.noise_sd = get_double(d, "noise_sd", -1.0);
    const ToyKind kind = toy_from_string(detail::require_string(d, "toy", "data"));
    out.train.data = gen_toy(kind, data_seed, opts);
    out.train.raw = out.train.data.inputs;
    out.test = out.train;
    for (int k = 0; k < toy_input_dim(kind); ++k) out.feature_names.push_back("x" + std::to_string(k + 1));
    return out;
  }

  out.tabular = true;
  const auto schema = schema_for(d);
  Table table;
  if (source == "csv") {
    table = load_csv(detail::require_string(d, "path", "data"), schema);
  } else if (source == "surrogate") {
    table = get_string(d, "surrogate", "") == "clinical"
                ? gen_clinical_surrogate(static_cast<std::size_t>(get_int(d, "rows", 20000)), data_seed)
                : gen_credit_surrogate(static_cast<std::size_t>(get_int(d, "rows", 20000)), data_seed);
  } else {
    throw ConfigError("data: unknown source '" + source + "'");
  }
  std::map<std::string, int> raw_aliases;
  for (std::size_t i = 0; i < table.names.size(); ++i) raw_aliases[table.names[i]] = static_cast<int>(i);

  PreprocessOptions popts;
  popts.train_fraction = get_double(d, "train_fraction", 0.8);
  popts.upsample_minority = get_bool(d, "upsample_minority", false);
  const auto filter = expression_list(d, "train_filter", raw_aliases, "data.train_filter");
  if (!filter.empty()) popts.keep_train_row = [filter](const Eigen::VectorXd& row) { return all_nonpositive(filter, row); };
  SplitDataset split = preprocess(table, schema, popts, data_seed);

  out.train = View{split.train, split.raw_train.values, raw_aliases};
  out.test = View{split.test, split.raw_test.values, raw_aliases};
  for (const auto& f : split.record.features) out.feature_names.push_back(f.name);
  out.record = split.record;
  return out;
}

void keep_rows(View& v, const std::vector<bool>& keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) rows.push_back(i);
  v.data = v.data.subset(rows);
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(rows.size()), v.raw.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) raw.row(static_cast<Eigen::Index>(i)) = v.raw.row(static_cast<Eigen::Index>(rows[i]));
  v.raw = std::move(raw);
}

// --- constraints ---------------------------------------------------------------

std::map<std::string, int> feature_aliases(const LoadedData& data) {
  std::map<std::string, int> out;
  if (data.record) return data.record->aliases();
  return out;
}

// Replaces a region's `bounds = { name = [lo, hi] }` table with full
// lower/upper arrays.
void expand_bounds(toml::table& region, const std::vector<std::string>& names, const std::string& ctx) {
  const auto* bounds = region.get_as<toml::table>("bounds");
  if (!bounds) return;
  std::vector<double> lo(names.size(), -kInf), hi(names.size(), kInf);
  for (const auto& [key, node] : *bounds) {
    const std::string name(key.str());
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError(ctx + ": bounds name unknown column '" + name + "'");
    const auto* pair = node.as_array();
    if (!pair || pair->size() != 2) throw ConfigError(ctx + ": bounds." + name + " must be [lower, upper]");
    const auto i = static_cast<std::size_t>(it - names.begin());
    lo[i] = pair->get(0)->value<double>().value_or(-kInf);
    hi[i] = pair->get(1)->value<double>().value_or(kInf);
  }
  toml::array lower, upper;
  for (std::size_t i = 0; i < names.size(); ++i) {
    lower.push_back(lo[i]);
    upper.push_back(hi[i]);
  }
  region.insert_or_assign("lower", std::move(lower));
  region.insert_or_assign("upper", std::move(upper));
  region.erase("bounds");
}

void map_box(Box& b, const std::function<void(Eigen::VectorXd&)>& fn) {
  fn(b.lower);
  fn(b.upper);
}

void for_each_box(InputRegion& region, const std::function<void(Eigen::VectorXd&)>& fn) {
  std::visit(
      [&](auto& r) {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Box>) {
          map_box(r, fn);
        } else if constexpr (std::is_same_v<R, PredicateRegion>) {
          map_box(r.bounds, fn);
        } else {
          if (r.sampling_box) map_box(*r.sampling_box, fn);
        }
      },
      region);
}

// `open_regions` receives each region before its unbounded sides are closed.
std::vector<Constraint> load_constraints(const toml::table& cfg, const LoadedData& data,
                                         std::vector<InputRegion>* open_regions = nullptr) {
  std::vector<Constraint> out;
  const auto* arr = cfg.get_as<toml::array>("constraints");
  if (!arr) return out;
  const Eigen::MatrixXd& x = data.train.data.inputs;
  const int q = static_cast<int>(x.cols());
  // Open sides close at the training min/max, or at the fill_quantile and
  // 1 - fill_quantile training quantiles when set.
  const auto* dcfg = get_table(cfg, "data");
  const double fq = dcfg ? get_double(*dcfg, "fill_quantile", 0.0) : 0.0;
  if (!(fq >= 0.0 && fq < 0.5)) throw ConfigError("data.fill_quantile must be in [0, 0.5)");
  Eigen::VectorXd lo(q), hi(q);
  for (int j = 0; j < q; ++j) {
    std::vector<double> col(x.col(j).data(), x.col(j).data() + x.rows());
    std::sort(col.begin(), col.end());
    const auto at = [&](double p) { return col[static_cast<std::size_t>(std::lround(p * static_cast<double>(col.size() - 1)))]; };
    lo[j] = at(fq);
    hi[j] = at(1.0 - fq);
  }
  std::size_t index = 0;
  for (const auto& node : *arr) {
    const auto* src = node.as_table();
    if (!src) throw ConfigError("constraints must be tables");
    toml::table t = *src;
    const std::string ctx = "constraint " + std::to_string(index);
    if (auto* region = t.get_as<toml::table>("region")) expand_bounds(*region, data.feature_names, ctx);
    Constraint c = detail::parse_constraint_table(t, q, feature_aliases(data), index++);

    const std::string units = get_string(t, "units", "model");
    if (units == "raw") {
      if (!data.record) throw ConfigError(ctx + ": raw units need tabular data");
      for_each_box(c.region, [&](Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i)
          if (std::isfinite(v[i])) v[i] = data.record->features[static_cast<std::size_t>(i)].apply(v[i]);
      });
    } else if (units != "model") {
      throw ConfigError(ctx + ": units must be 'model' or 'raw'");
    }
    if (open_regions) open_regions->push_back(c.region);
    // Unbounded sides are closed for sampling, never past the opposite side.
    const auto close = [&](Box& b) {
      for (Eigen::Index i = 0; i < b.lower.size(); ++i) {
        if (b.lower[i] == -kInf) b.lower[i] = std::min(lo[i], b.upper[i]);
        if (b.upper[i] == kInf) b.upper[i] = std::max(hi[i], b.lower[i]);
      }
    };
    std::visit(
        [&](auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, Box>) {
            close(r);
          } else if constexpr (std::is_same_v<R, PredicateRegion>) {
            close(r.bounds);
          } else {
            if (r.sampling_box) close(*r.sampling_box);
          }
        },
        c.region);
    if (auto* whole = std::get_if<WholeSpace>(&c.region); whole && !whole->sampling_box) whole->sampling_box = Box{lo, hi};
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

const Constraint& find_constraint(const std::vector<Constraint>& cs, const std::string& id) {
  for (const auto& c : cs)
    if (c.id == id) return c;
  throw ConfigError("no constraint with id '" + id + "'");
}

// --- priors --------------------------------------------------------------------

CocpFamily parse_family(const toml::table& t, const std::string& ctx) {
  const std::string name = detail::require_string(t, "family", ctx);
  if (name == "gmm") {
    GmmFamily f;
    f.sd = get_double(t, "sd", f.sd);
    if (t.contains("weights")) f.weights = detail::get_doubles(t, "weights", ctx);
    return f;
  }
  if (name == "dirichlet") {
    DirichletFamily f;
    if (t.contains("alpha_allowed")) {
      const double a = detail::require_double(t, "alpha_allowed", ctx);
      const double b = detail::require_double(t, "alpha_other", ctx);
      f.gamma = a;
      f.c = 1.0 - b / a;
    } else {
      f.gamma = get_double(t, "gamma", f.gamma);
      f.c = get_double(t, "c", f.c);
    }
    return f;
  }
  if (name == "neg_exp") {
    NegExpFamily f;
    f.gamma = get_double(t, "gamma", f.gamma);
    f.tau0 = get_double(t, "tau0", f.tau0);
    f.tau1 = get_double(t, "tau1", f.tau1);
    return f;
  }
  if (name == "target") return TargetFamily{};
  throw ConfigError(ctx + ": unknown family '" + name + "'");
}

// Redraws the COCP points whenever the sampler asks for a fresh minibatch.
class ResamplingLikelihood : public Likelihood {
 public:
  ResamplingLikelihood(std::shared_ptr<Likelihood> inner, std::shared_ptr<CocpPrior> prior)
      : inner_(std::move(inner)), prior_(std::move(prior)) {}
  double log_likelihood(const ParamVector& w, Eigen::VectorXd* grad) const override {
    return inner_->log_likelihood(w, grad);
  }
  void refresh(Rng& rng) override {
    inner_->refresh(rng);
    prior_->resample(rng);
  }

 private:
  std::shared_ptr<Likelihood> inner_;
  std::shared_ptr<CocpPrior> prior_;
};

// Dirichlet(alpha) mixtures of Q + 1 random training rows. Small alpha puts
// most of the weight on one row.
Eigen::MatrixXd hull_points(const Eigen::MatrixXd& x, std::size_t count, double alpha, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(x.cols()) + 1);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), x.cols());
  for (std::size_t i = 0; i < count; ++i) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
    Eigen::RowVectorXd first;
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double wgt = gamma(rng);
      const auto row = x.row(static_cast<Eigen::Index>(pick(rng)));
      if (j == 0) first = row;
      total += wgt;
      acc += wgt * row;
    }
    out.row(static_cast<Eigen::Index>(i)) = total > 0.0 ? Eigen::RowVectorXd(acc / total) : first;
  }
  return out;
}

// --- evaluation ----------------------------------------------------------------

Eigen::MatrixXd make_grid(const toml::table* ev, const Dataset& train) {
  const auto q = train.inputs.cols();
  Eigen::VectorXd lo = train.inputs.colwise().minCoeff().transpose().array() - 1.0;
  Eigen::VectorXd hi = train.inputs.colwise().maxCoeff().transpose().array() + 1.0;
  if (ev && ev->contains("grid_lower")) lo = Eigen::Map<const Eigen::VectorXd>(detail::get_doubles(*ev, "grid_lower", "evaluation").data(), q);
  if (ev && ev->contains("grid_upper")) hi = Eigen::Map<const Eigen::VectorXd>(detail::get_doubles(*ev, "grid_upper", "evaluation").data(), q);
  const auto n = static_cast<Eigen::Index>(ev ? get_int(*ev, "grid_points", q == 1 ? 200 : 100) : (q == 1 ? 200 : 100));
  if (n < 2) throw ConfigError("evaluation.grid_points must be at least 2");
  const auto axis = [&](Eigen::Index d, Eigen::Index i) {
    return lo[d] + (hi[d] - lo[d]) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  if (q == 1) {
    Eigen::MatrixXd g(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) g(i, 0) = axis(0, i);
    return g;
  }
  Eigen::MatrixXd g(n * n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      g(i * n + j, 0) = axis(0, i);
      g(i * n + j, 1) = axis(1, j);
    }
  return g;
}

struct EvalContext {
  const Mlp* mlp;
  const PosteriorSamples* samples;
  const LoadedData* data;
  const std::vector<Constraint>* constraints;
  const Eigen::MatrixXd* grid;  // empty for tabular data
  Rng* rng;
  const std::vector<InputRegion>* open_regions;  // aligned with constraints
};

// Membership region for data rows: the constraint's region before its open
// sides were closed for sampling.
const InputRegion& open_region(const EvalContext& ctx, const Constraint& c) {
  for (std::size_t k = 0; k < ctx.constraints->size(); ++k)
    if ((*ctx.constraints)[k].id == c.id) return (*ctx.open_regions)[k];
  return c.region;
}

const View& split_view(const EvalContext& ctx, const std::string& split) {
  if (split == "train") return ctx.data->train;
  if (split == "test") return ctx.data->test;
  throw ConfigError("evaluation: split must be 'train' or 'test'");
}

Eigen::MatrixXd rows_in_region(const Eigen::MatrixXd& pts, const InputRegion& region) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    if (region_contains(region, pts.row(i).transpose())) keep.push_back(i);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), pts.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts.row(keep[i]);
  return out;
}

Eigen::MatrixXd metric_points(const EvalContext& ctx, const toml::table& m, const Constraint& c) {
  const auto* node = m.get("points");
  if (node && node->is_integer()) {
    const auto n = node->value<std::int64_t>().value_or(0);
    if (n < 1) throw ConfigError("evaluation: points must be positive");
    return sample_region(c.region, static_cast<std::size_t>(n), *ctx.rng);
  }
  const std::string which = node ? node->value<std::string>().value_or("") : (ctx.grid->rows() ? "grid" : "test");
  Eigen::MatrixXd pts;
  if (which == "grid") {
    if (ctx.grid->rows() == 0) throw ConfigError("evaluation: no grid for tabular data");
    pts = rows_in_region(*ctx.grid, c.region);
  } else {
    pts = rows_in_region(split_view(ctx, which).data.inputs, open_region(ctx, c));
  }
  if (pts.rows() == 0) throw MetricError("evaluation: no " + which + " points inside constraint '" + c.id + "'");
  return pts;
}

Eigen::VectorXd raw_column(const View& v, const std::string& name) {
  const auto it = v.raw_aliases.find(name);
  if (it != v.raw_aliases.end()) return v.raw.col(it->second);
  if (name.size() > 1 && name[0] == 'x') {
    const int k = std::stoi(name.substr(1)) - 1;
    if (k >= 0 && k < v.data.inputs.cols()) return v.data.inputs.col(k);
  }
  throw ConfigError("evaluation: unknown column '" + name + "'");
}

void evaluate_metric(const EvalContext& ctx, const toml::table& m, MetricReport& report) {
  const std::string kind = detail::require_string(m, "kind", "evaluation.metrics");
  const std::string name = get_string(m, "name", kind);
  const Mlp& mlp = *ctx.mlp;
  const PosteriorSamples& samples = *ctx.samples;

  if (kind == "violation_fraction" && m.get_as<toml::array>("constraint")) {
    std::vector<Constraint> cs;
    std::vector<Eigen::MatrixXd> parts;
    Eigen::Index total = 0;
    for (const auto& id : *m.get_as<toml::array>("constraint")) {
      const auto name_id = id.value<std::string>();
      if (!name_id) throw ConfigError("evaluation: constraint ids must be strings");
      cs.push_back(find_constraint(*ctx.constraints, *name_id));
    }
    // An integer point count is split evenly across the constraint regions.
    const auto* node = m.get("points");
    for (const auto& c : cs) {
      if (node && node->is_integer()) {
        const auto n = node->value<std::int64_t>().value_or(0);
        if (n < static_cast<std::int64_t>(cs.size())) throw ConfigError("evaluation: too few points");
        parts.push_back(sample_region(c.region, static_cast<std::size_t>(n) / cs.size(), *ctx.rng));
      } else {
        parts.push_back(metric_points(ctx, m, c));
      }
      total += parts.back().rows();
    }
    Eigen::MatrixXd pts(total, parts.front().cols());
    Eigen::Index row = 0;
    for (const auto& p : parts) {
      pts.middleRows(row, p.rows()) = p;
      row += p.rows();
    }
    std::string ids;
    for (const auto& c : cs) ids += (ids.empty() ? "" : ",") + c.id;
    report.add(name, violation_fraction(samples, mlp, cs, pts), "constraint", static_cast<std::size_t>(total), ids);
    return;
  }
  if (kind == "constraint_distance") {
    // Mean distance from the predictive mean to the nearest permitted output.
    const Constraint& c = find_constraint(*ctx.constraints, detail::require_string(m, "constraint", name));
    if (!c.deterministic() || mlp.arch().task != Task::regression)
      throw ContractError("constraint_distance: deterministic regression constraints only");
    const Eigen::MatrixXd pts = metric_points(ctx, m, c);
    const Eigen::VectorXd mean = point_predictions(posterior_predictive(samples, mlp, pts), Task::regression);
    double total = 0.0;
    for (Eigen::Index j = 0; j < pts.rows(); ++j) {
      double best = kInf;
      for (const auto& iv : permitted_intervals(c, pts.row(j).transpose()))
        best = std::min(best, std::max({iv.lower - mean[j], mean[j] - iv.upper, 0.0}));
      total += best;
    }
    report.add(name, total / static_cast<double>(pts.rows()), "constraint", static_cast<std::size_t>(pts.rows()), c.id);
    return;
  }
  if (kind == "violation_fraction" || kind == "median_satisfaction" || kind == "epsilon_satisfaction" ||
      kind == "rejection_rate") {
    const Constraint& c = find_constraint(*ctx.constraints, detail::require_string(m, "constraint", name));
    const Eigen::MatrixXd pts = metric_points(ctx, m, c);
    const auto n = static_cast<std::size_t>(pts.rows());
    if (kind == "violation_fraction") {
      report.add(name, violation_fraction(samples, mlp, c, pts), "constraint", n, c.id);
    } else if (kind == "median_satisfaction") {
      report.add(name, median_satisfaction_fraction(samples, mlp, c, pts), "constraint", n, c.id);
    } else if (kind == "epsilon_satisfaction") {
      double total = 0.0, worst = 1.0;
      for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const double e = epsilon_satisfaction(samples, mlp, c, pts.row(i).transpose());
        total += e;
        worst = std::min(worst, e);
      }
      report.add(name, total / static_cast<double>(n), "constraint", n, c.id);
      report.add(name + "_min", worst, "constraint", n, c.id);
    } else {
      const auto r = rejection_sample(samples, mlp, c, pts);
      report.add(name, r.rejection_rate, "constraint", n, c.id);
    }
    return;
  }

  const std::string split = get_string(m, "split", "test");
  const View& view = split_view(ctx, split);
  const auto summary = posterior_predictive(samples, mlp, view.data.inputs);
  const Eigen::VectorXd pred = point_predictions(summary, mlp.arch().task);
  const std::size_t n = view.data.size();
  if (kind == "accuracy" || kind == "f1") {
    const auto cm = classification_metrics(pred, view.data.targets);
    report.add(name, kind == "accuracy" ? cm.accuracy : cm.f1, split, n);
  } else if (kind == "rmse") {
    report.add(name, std::sqrt((pred - view.data.targets).squaredNorm() / static_cast<double>(n)), split, n);
  } else if (kind == "group_fraction") {
    const auto g = group_positive_fraction(pred, raw_column(view, detail::require_string(m, "group", name)));
    report.add(name + "_group1", g.group1, split, n);
    report.add(name + "_group0", g.group0, split, n);
    report.add(name + "_gap", g.gap, split, n);
    report.add(name + "_ratio", g.ratio(), split, n);
  } else if (kind == "effort_of_recourse") {
    const auto mask_exprs = expression_list(m, "mask", view.raw_aliases, name + ".mask");
    std::vector<bool> mask(n);
    std::size_t in_mask = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mask[i] = all_nonpositive(mask_exprs, view.raw.row(static_cast<Eigen::Index>(i)).transpose());
      in_mask += mask[i];
    }
    report.add(name, effort_of_recourse(pred, raw_column(view, detail::require_string(m, "feature", name)), mask),
               split, in_mask);
  } else if (kind == "positive_fraction") {
    report.add(name, (pred.array() > 0.5).cast<double>().mean(), split, n);
  } else {
    throw ConfigError("evaluation: unknown metric kind '" + kind + "'");
  }
}

std::string predictive_csv(const PredictiveSummary& s, const Mlp& mlp, const Eigen::MatrixXd& inputs,
                           const std::vector<std::string>& names, const std::string& hash) {
  std::ostringstream out;
  out << "# config_hash: " << hash << "\n";
  const bool regression = mlp.arch().task == Task::regression;
  for (std::size_t k = 0; k < names.size(); ++k) out << (k ? "," : "") << (names.size() == 1 ? "x" : names[k]);
  if (regression) {
    out << ",mean,q2.5,q50,q97.5\n";
  } else {
    for (Eigen::Index k = 0; k < s.probabilities.cols(); ++k) out << ",p" << k;
    out << "\n";
  }
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    for (Eigen::Index k = 0; k < inputs.cols(); ++k) out << (k ? "," : "") << fmt(inputs(i, k));
    if (regression) {
      out << "," << fmt(s.mean[i]);
      for (Eigen::Index l = 0; l < s.quantiles.cols(); ++l) out << "," << fmt(s.quantiles(i, l));
    } else {
      for (Eigen::Index k = 0; k < s.probabilities.cols(); ++k) out << "," << fmt(s.probabilities(i, k));
    }
    out << "\n";
  }
  return out.str();
}

// --- inference -----------------------------------------------------------------

ParamVector map_start(const LogPosterior& post, ParamVector w, std::size_t steps, double lr) {
  if (steps == 0) return w;
  AdaGrad opt(w.size(), lr);
  Eigen::VectorXd g(w.size());
  for (std::size_t i = 0; i < steps; ++i) {
    post.value_and_gradient(w, g);
    opt.ascend(w, g);
  }
  return w;
}

PosteriorSamples run_inference(const toml::table& cfg, const LogPosterior& post, std::uint64_t seed) {
  const toml::table empty;
  const auto* inf = get_table(cfg, "inference");
  const toml::table& t = inf ? *inf : empty;
  const std::string method = get_string(t, "method", "hmc");
  const auto* sub = get_table(t, method);
  const toml::table& m = sub ? *sub : empty;
  Rng rng(derive_seed(seed, kInference));
  const auto uint = [&](const char* key, std::size_t fallback) {
    const auto v = get_int(m, key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(std::string("inference.") + method + "." + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };

  if (method == "hmc") {
    HmcOptions o;
    o.burn_in = uint("burn_in", o.burn_in);
    o.n_collect = uint("n_collect", o.n_collect);
    o.thin = uint("thin", o.thin);
    o.leapfrog_steps = static_cast<int>(get_int(m, "leapfrog_steps", o.leapfrog_steps));
    o.step_size = get_double(m, "step_size", o.step_size);
    o.target_accept = get_double(m, "target_accept", o.target_accept);
    o.adapt = get_bool(m, "adapt", o.adapt);
    o.adapt_window = uint("adapt_window", o.adapt_window);
    o.max_step_retries = static_cast<int>(get_int(m, "max_step_retries", o.max_step_retries));
    const double init_sd = get_double(m, "init_sd", 0.1);
    std::normal_distribution<double> normal(0.0, init_sd);
    ParamVector w0(static_cast<Eigen::Index>(post.dim()));
    for (Eigen::Index i = 0; i < w0.size(); ++i) w0[i] = normal(rng);
    if (const auto g = post.prior().diagonal_gaussian()) w0 += g->mean;
    w0 = map_start(post, w0, uint("map_steps", 0), get_double(m, "map_learning_rate", 0.05));
    return hmc(post, w0, o, rng);
  }
  if (method == "svgd") {
    SvgdOptions o;
    o.particles = uint("particles", o.particles);
    o.iterations = uint("iterations", o.iterations);
    o.learning_rate = get_double(m, "learning_rate", o.learning_rate);
    o.init_sd = get_double(m, "init_sd", o.init_sd);
    return svgd(post, o, rng);
  }
  if (method == "bbb") {
    BbbOptions o;
    o.epochs = uint("epochs", o.epochs);
    o.learning_rate = get_double(m, "learning_rate", o.learning_rate);
    o.n_eps = uint("n_eps", o.n_eps);
    o.init_mu = get_double(m, "init_mu", o.init_mu);
    o.init_mu_jitter = get_double(m, "init_mu_jitter", 0.1);
    o.init_sigma = get_double(m, "init_sigma", o.init_sigma);
    o.n_samples = uint("n_samples", o.n_samples);
    return bbb(post, o, rng).samples;
  }
  throw ConfigError("inference: unknown method '" + method + "'");
}

fs::path output_root(const RunOverrides& o) {
  if (!o.output_root.empty()) return o.output_root;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "runs";
}

}  // namespace

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunResult run_experiment(const std::string& config_path, const RunOverrides& overrides) {
  const fs::path p = fs::absolute(config_path);
  return run_experiment_text(read_text(p.string()), p.parent_path().string(), overrides);
}

RunResult run_experiment_text(const std::string& toml_text, const std::string& base_dir,
                              const RunOverrides& overrides) {
  toml::table cfg;
  try {
    cfg = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config: " + std::string(e.description()));
  }
  if (overrides.seed) cfg.insert_or_assign("seed", static_cast<std::int64_t>(*overrides.seed));
  for (const auto& [path, value] : overrides.params) set_path(cfg, path, value);
  if (auto* d = cfg.get_as<toml::table>("data")) {
    absolutize(*d, "path", base_dir);
    absolutize(*d, "schema", base_dir);
  }
  const std::string name = get_string(cfg, "name", "run");
  const std::string out_name = overrides.output_dir.empty() ? get_string(cfg, "output_dir", name) : overrides.output_dir;

  RunResult result;
  result.config_snapshot = to_text(cfg);
  result.config_hash = config_hash(result.config_snapshot);
  const auto seed = static_cast<std::uint64_t>(get_int(cfg, "seed", 0));

  const toml::table empty;
  const auto* data_cfg = get_table(cfg, "data");
  LoadedData data = load_data(data_cfg ? *data_cfg : empty, seed);

  NetworkArch arch;
  const auto* arch_cfg = get_table(cfg, "arch");
  const toml::table& a = arch_cfg ? *arch_cfg : empty;
  arch.input_dim = static_cast<int>(data.train.data.inputs.cols());
  if (a.contains("hidden")) arch.hidden_layers = detail::get_ints(a, "hidden", "arch");
  arch.task = task_from_string(get_string(a, "task", "regression"));
  arch.num_classes = static_cast<int>(get_int(a, "num_classes", 2));
  arch.noise_sd = get_double(a, "noise_sd", 0.1);
  arch.validate();
  const Mlp mlp(arch);
  const std::size_t dim = mlp.num_params();

  std::vector<InputRegion> open_regions;
  const auto constraints = load_constraints(cfg, data, &open_regions);
  if (data_cfg && get_bool(*data_cfg, "exclude_constraint_regions", false)) {
    std::vector<bool> keep(data.train.data.size(), true);
    for (std::size_t i = 0; i < keep.size(); ++i)
      for (std::size_t k = 0; k < constraints.size(); ++k)
        if (constraints[k].deterministic() &&
            region_contains(open_regions[k], data.train.data.inputs.row(static_cast<Eigen::Index>(i)).transpose()))
          keep[i] = false;
    keep_rows(data.train, keep);
  }
  data.train.data.validate(arch);

  // prior
  const auto* prior_cfg = get_table(cfg, "prior");
  const toml::table& pc = prior_cfg ? *prior_cfg : empty;
  const std::string prior_kind = get_string(pc, "kind", "baseline");
  const double base_sd = get_double(pc, "base_sd", 1.0);
  if (!(base_sd > 0.0)) throw ConfigError("prior.base_sd must be positive");

  const auto* inf_cfg = get_table(cfg, "inference");
  const auto batch = static_cast<std::size_t>(inf_cfg ? get_int(*inf_cfg, "batch_size", 0) : 0);
  std::shared_ptr<Likelihood> likelihood = std::make_shared<DataLikelihood>(mlp, data.train.data, batch);

  std::shared_ptr<const LogPrior> prior;
  std::optional<AocpResult> aocp_result;
  if (prior_kind == "baseline") {
    prior = std::make_shared<GaussianPrior>(dim, base_sd);
  } else if (prior_kind == "cocp") {
    std::vector<CocpTerm> terms;
    const auto* arr = pc.get_as<toml::array>("terms");
    if (!arr || arr->empty()) throw ConfigError("prior.terms: a COCP needs at least one term");
    std::uint64_t k = 0;
    for (const auto& node : *arr) {
      const auto* t = node.as_table();
      if (!t) throw ConfigError("prior.terms entries must be tables");
      const std::string ctx = "prior.terms[" + std::to_string(k) + "]";
      CocpTerm term{find_constraint(constraints, detail::require_string(*t, "constraint", ctx)),
                    parse_family(*t, ctx), {}};
      const auto points = get_int(*t, "points", 50);
      if (points < 1) throw ConfigError(ctx + ".points must be at least 1");
      const std::uint64_t term_seed = derive_seed(seed, kConstraintSample + 16 * ++k);
      const std::string from = get_string(*t, "sample_from", "region");
      if (from == "training_hull") {
        // Mixtures of training rows inside the region; a box is convex, so
        // they stay inside it.
        if (get_bool(pc, "resample", false)) throw ConfigError(ctx + ": training_hull terms cannot be resampled");
        const auto idx = static_cast<std::size_t>(&find_constraint(constraints, term.constraint.id) - constraints.data());
        const Eigen::MatrixXd inside = rows_in_region(data.train.data.inputs, open_regions[idx]);
        if (inside.rows() == 0) throw ConfigError(ctx + ": no training rows inside the constraint region");
        const double alpha = get_double(*t, "hull_alpha", 1.0);
        if (!(alpha > 0.0)) throw ConfigError(ctx + ".hull_alpha must be positive");
        Rng term_rng(term_seed);
        term.sample.points = hull_points(inside, static_cast<std::size_t>(points), alpha, term_rng);
        term.sample.seed = term_seed;
      } else if (from == "region") {
        term.sample = sample_region(term.constraint.region, static_cast<std::size_t>(points), term_seed);
      } else {
        throw ConfigError(ctx + ".sample_from must be 'region' or 'training_hull'");
      }
      terms.push_back(std::move(term));
    }
    auto cocp = std::make_shared<CocpPrior>(mlp, base_sd, std::move(terms));
    if (get_bool(pc, "resample", false)) likelihood = std::make_shared<ResamplingLikelihood>(likelihood, cocp);
    prior = cocp;
  } else if (prior_kind == "aocp") {
    const auto* ac = get_table(pc, "aocp");
    const toml::table& at = ac ? *ac : empty;
    AocpOptions o;
    o.epochs = static_cast<int>(get_int(at, "epochs", o.epochs));
    o.learning_rate = get_double(at, "learning_rate", o.learning_rate);
    o.points_per_epoch = static_cast<std::size_t>(get_int(at, "points_per_epoch", 30));
    o.init_mu = get_double(at, "init_mu", o.init_mu);
    o.init_mu_jitter = get_double(at, "init_mu_jitter", 0.1);
    o.init_sigma = get_double(at, "init_sigma", o.init_sigma);
    const std::string from = get_string(at, "sample_from", "region");
    if (from == "training_hull") {
      const Eigen::MatrixXd x = data.train.data.inputs;
      const double alpha = get_double(at, "hull_alpha", 1.0);
      if (!(alpha > 0.0)) throw ConfigError("prior.aocp.hull_alpha must be positive");
      o.sampler = [x, alpha](const Constraint&, std::size_t n, Rng& r) { return hull_points(x, n, alpha, r); };
    } else if (from != "region") {
      throw ConfigError("prior.aocp.sample_from must be 'region' or 'training_hull'");
    }
    std::vector<Constraint> used;
    if (at.contains("constraints")) {
      const auto* ids = at.get_as<toml::array>("constraints");
      if (!ids) throw ConfigError("prior.aocp.constraints must be an array of ids");
      for (const auto& id : *ids) used.push_back(find_constraint(constraints, id.value<std::string>().value_or("")));
    } else {
      used = constraints;
    }
    if (used.empty()) throw ConfigError("prior.aocp: no constraints to optimise");
    Rng arng(derive_seed(seed, kAocp));
    aocp_result = optimize_aocp(mlp, used, o, arng);
    const double shrink = get_double(at, "shrink", 35.0);
    if (!(shrink > 0.0)) throw ConfigError("prior.aocp.shrink must be positive");
    prior = std::make_shared<AocpPrior>(aocp_result->params, shrink);
  } else {
    throw ConfigError("prior.kind must be baseline, cocp or aocp");
  }

  const LogPosterior post(prior, likelihood);
  result.samples = run_inference(cfg, post, seed);
  result.samples.seed = seed;
  result.samples.validate();

  // evaluation
  const auto* ev = get_table(cfg, "evaluation");
  Eigen::MatrixXd grid(0, arch.input_dim);
  if (!data.tabular && arch.input_dim <= 2) grid = make_grid(ev, data.train.data);
  Rng erng(derive_seed(seed, kEval));
  const EvalContext ectx{&mlp, &result.samples, &data, &constraints, &grid, &erng, &open_regions};
  const auto& diag = result.samples.diagnostics;
  result.metrics.add("n_samples", static_cast<double>(result.samples.size()), "posterior", result.samples.size());
  result.metrics.add("n_train", static_cast<double>(data.train.data.size()), "train", data.train.data.size());
  if (result.samples.method == "hmc") {
    result.metrics.add("acceptance_rate", diag.acceptance_rate, "posterior", diag.proposals);
    result.metrics.add("final_step_size", diag.final_step_size, "posterior", diag.proposals);
  }
  if (aocp_result && !aocp_result->loss_history.empty())
    result.metrics.add("aocp_final_loss", aocp_result->loss_history.back(), "prior", aocp_result->loss_history.size());
  if (ev) {
    if (const auto* arr = ev->get_as<toml::array>("metrics")) {
      for (const auto& node : *arr) {
        const auto* m = node.as_table();
        if (!m) throw ConfigError("evaluation.metrics entries must be tables");
        evaluate_metric(ectx, *m, result.metrics);
      }
    }
  }

  Eigen::MatrixXd query = grid;
  if (grid.rows() == 0) query = split_view(ectx, ev ? get_string(*ev, "predictive_split", "test") : "test").data.inputs;
  const auto summary = posterior_predictive(result.samples, mlp, query);
  const std::string csv = predictive_csv(summary, mlp, query, data.feature_names, result.config_hash);

  if (!overrides.write_artifacts) return result;

  const fs::path target = output_root(overrides) / out_name;
  fs::path staging = target;
  staging += ".staging";
  fs::create_directories(target.parent_path().empty() ? fs::path(".") : target.parent_path());
  fs::remove_all(staging);
  try {
    fs::create_directories(staging);
    nlohmann::json extra{{"config_hash", result.config_hash}};
    save_samples((staging / "samples.bin").string(), arch, result.samples, extra.dump());
    write_text(staging / "predictive.csv", csv);
    write_text(staging / "metrics.json", result.metrics.to_json(result.config_hash));
    write_text(staging / "config.toml", result.config_snapshot);
    if (data.record) write_text(staging / "preprocess.json", data.record->to_json() + "\n");
    if (aocp_result) save_variational((staging / "aocp").string(), arch, aocp_result->params);
    fs::remove_all(target);
    fs::rename(staging, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  result.output_dir = target.string();
  return result;
}

std::string compare_runs(const std::string& dir_a, const std::string& dir_b, const std::string& metric) {
  const auto value = [&](const std::string& dir) {
    const auto report = MetricReport::from_json(read_text((fs::path(dir) / "metrics.json").string()));
    const auto e = report.find(metric);
    if (!e) throw MetricError("metric '" + metric + "' is absent from '" + dir + "'");
    return e->value;
  };
  const double a = value(dir_a), b = value(dir_b);
  nlohmann::ordered_json out;
  out["metric"] = metric;
  out["a"] = {{"dir", dir_a}, {"value", a}};
  out["b"] = {{"dir", dir_b}, {"value", b}};
  out["difference"] = b - a;
  return out.dump(2) + "\n";
}

std::vector<SweepPoint> run_sweep(const std::string& config_path, const std::string& param,
                                  const std::vector<std::string>& values, const RunOverrides& overrides) {
  if (values.empty()) throw ConfigError("sweep: no values");
  const fs::path p = fs::absolute(config_path);
  const std::string text = read_text(p.string());
  toml::table cfg;
  try {
    cfg = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config: " + std::string(e.description()));
  }
  const std::string base = overrides.output_dir.empty() ? get_string(cfg, "output_dir", get_string(cfg, "name", "run"))
                                                        : overrides.output_dir;
  const std::string leaf = param.substr(param.find_last_of('.') + 1);

  std::vector<SweepPoint> out;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& v : values) {
    RunOverrides o = overrides;
    o.params.emplace_back(param, v);
    o.output_dir = (fs::path(base) / (leaf + "=" + v)).string();
    SweepPoint sp{v, run_experiment_text(text, p.parent_path().string(), o)};
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    for (const auto& e : sp.result.metrics.entries()) metrics[e.name] = e.value;
    runs.push_back({{"value", v}, {"dir", sp.result.output_dir}, {"config_hash", sp.result.config_hash},
                    {"metrics", metrics}});
    out.push_back(std::move(sp));
  }
  if (overrides.write_artifacts) {
    nlohmann::ordered_json summary{{"param", param}, {"runs", runs}};
    const fs::path dir = output_root(overrides) / base;
    fs::create_directories(dir);
    const fs::path tmp = dir / "sweep.json.tmp";
    write_text(tmp, summary.dump(2) + "\n");
    fs::rename(tmp, dir / "sweep.json");
  }
  return out;
}

}  // namespace ocbnn
