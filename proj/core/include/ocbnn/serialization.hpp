#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocbnn/aocp.hpp"
#include "ocbnn/inference.hpp"
#include "ocbnn/network.hpp"

namespace ocbnn {

/// Binary layout (all integers and floats little-endian):
///
///   parameter file   "OCBNNPV1" fingerprint u64:M f64[M]
///   samples file     "OCBNNPS1" fingerprint u32:len json[len] u64:S u64:M f64[S*M]
///   fingerprint      u32:input_dim u32:n_hidden u32[n_hidden] u32:task u32:num_classes
///
/// The samples header JSON holds method, seed, diagnostics and any extra
/// fields supplied by the caller (e.g. the config hash).
std::vector<std::uint8_t> arch_fingerprint(const NetworkArch& arch);

void save_params(const std::string& path, const NetworkArch& arch, const ParamVector& w);
ParamVector load_params(const std::string& path, const NetworkArch& arch);

/// mean goes to `<stem>.mu.bin`, sigma to `<stem>.sigma.bin`.
void save_variational(const std::string& stem, const NetworkArch& arch, const VariationalParams& lambda);
VariationalParams load_variational(const std::string& stem, const NetworkArch& arch);

void save_samples(const std::string& path, const NetworkArch& arch, const PosteriorSamples& samples,
                  const std::string& extra_json = "{}");

struct LoadedSamples {
  PosteriorSamples samples;
  std::string header_json;
};

LoadedSamples load_samples(const std::string& path, const NetworkArch& arch);

}  // namespace ocbnn
