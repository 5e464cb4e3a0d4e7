#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ocbnn/data.hpp"
#include "ocbnn/evaluation.hpp"
#include "ocbnn/inference.hpp"

namespace ocbnn {

/// Environment variable naming the directory that run outputs go under.
inline constexpr const char* kOutputRootEnv = "OCBNN_OUTPUT_ROOT";

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::string output_root;  // empty: $OCBNN_OUTPUT_ROOT, then "runs"
  std::string output_dir;   // replaces the config's output_dir when set
  /// Dotted-path assignments applied to the config before it is resolved,
  /// e.g. {"prior.terms.0.points", "25"}. Values are TOML literals.
  std::vector<std::pair<std::string, std::string>> params;
  bool write_artifacts = true;
};

struct RunResult {
  std::string output_dir;  // empty when nothing was written
  std::string config_hash;
  std::string config_snapshot;
  MetricReport metrics;
  PosteriorSamples samples;
};

/// FNV-1a 64-bit hash of `text` as 16 lowercase hex digits.
std::string config_hash(const std::string& text);

/// Runs one experiment. Artifacts are staged in a temporary directory next to
/// the target and renamed into place only when every step succeeded:
///   samples.bin      posterior samples (config hash in the header)
///   predictive.csv   "# config_hash: <hash>" line, then
///                    regression:      x, mean, q2.5, q50, q97.5
///                    classification:  x1..xQ, p0..p(K-1)
///   metrics.json     MetricReport
///   config.toml      resolved config (relative paths made absolute)
///   preprocess.json  fitted transforms, tabular data only
///   aocp.mu.bin / aocp.sigma.bin   AOCP prior, when used
RunResult run_experiment(const std::string& config_path, const RunOverrides& overrides = {});
RunResult run_experiment_text(const std::string& toml_text, const std::string& base_dir,
                              const RunOverrides& overrides = {});

/// Side-by-side values of one metric from two completed run directories, as
/// JSON {"metric", "a": {"dir", "value"}, "b": {...}, "difference": b - a}.
std::string compare_runs(const std::string& dir_a, const std::string& dir_b, const std::string& metric);

struct SweepPoint {
  std::string value;
  RunResult result;
};

/// One run per value of `param`; each goes to "<output_dir>/<leaf>=<value>"
/// and a sweep.json summary with every metric per value is written to
/// "<output_dir>".
std::vector<SweepPoint> run_sweep(const std::string& config_path, const std::string& param,
                                  const std::vector<std::string>& values, const RunOverrides& overrides = {});

}  // namespace ocbnn
