#include "ocbnn/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace ocbnn {

namespace {

constexpr char kParamMagic[8] = {'O', 'C', 'B', 'N', 'N', 'P', 'V', '1'};
constexpr char kSamplesMagic[8] = {'O', 'C', 'B', 'N', 'N', 'P', 'S', '1'};

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64s(const double* p, std::size_t n) { bytes(p, n * 8); }
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error("write failed for '" + path + "'");
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    buf_.assign(std::istreambuf_iterator<char>(in), {});
  }
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw SchemaError("'" + path_ + "' is truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  void expect(const char (&magic)[8]) {
    char got[8];
    bytes(got, 8);
    if (std::memcmp(got, magic, 8) != 0) throw SchemaError("'" + path_ + "' has an unexpected file type");
  }
  void expect_fingerprint(const NetworkArch& arch) {
    const auto fp = arch_fingerprint(arch);
    std::vector<std::uint8_t> got(fp.size());
    bytes(got.data(), got.size());
    if (got != fp) throw SchemaError("'" + path_ + "' was written for a different architecture");
  }
  void done() const {
    if (pos_ != buf_.size()) throw SchemaError("'" + path_ + "' has trailing bytes");
  }

 private:
  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

std::uint32_t task_tag(Task t) {
  switch (t) {
    case Task::regression:
      return 0;
    case Task::k_class:
      return 1;
    case Task::binary_logit:
      return 2;
  }
  return 0;
}

}  // namespace

std::vector<std::uint8_t> arch_fingerprint(const NetworkArch& arch) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(arch.input_dim));
  w.u32(static_cast<std::uint32_t>(arch.hidden_layers.size()));
  for (int h : arch.hidden_layers) w.u32(static_cast<std::uint32_t>(h));
  w.u32(task_tag(arch.task));
  w.u32(static_cast<std::uint32_t>(arch.task == Task::k_class ? arch.num_classes : 0));
  return std::move(w.buffer());
}

void save_params(const std::string& path, const NetworkArch& arch, const ParamVector& w) {
  if (static_cast<std::size_t>(w.size()) != arch.num_params()) throw ShapeError("save_params: length mismatch");
  if (!w.allFinite()) throw NumericError("save_params: non-finite parameters");
  Writer out;
  out.bytes(kParamMagic, 8);
  const auto fp = arch_fingerprint(arch);
  out.bytes(fp.data(), fp.size());
  out.u64(static_cast<std::uint64_t>(w.size()));
  out.f64s(w.data(), static_cast<std::size_t>(w.size()));
  out.save(path);
}

ParamVector load_params(const std::string& path, const NetworkArch& arch) {
  Reader in(path);
  in.expect(kParamMagic);
  in.expect_fingerprint(arch);
  const std::uint64_t m = in.u64();
  if (m != arch.num_params()) throw SchemaError("'" + path + "' has the wrong parameter count");
  ParamVector w(static_cast<Eigen::Index>(m));
  in.bytes(w.data(), m * 8);
  in.done();
  return w;
}

void save_variational(const std::string& stem, const NetworkArch& arch, const VariationalParams& lambda) {
  save_params(stem + ".mu.bin", arch, lambda.mu);
  save_params(stem + ".sigma.bin", arch, lambda.sigma());
}

VariationalParams load_variational(const std::string& stem, const NetworkArch& arch) {
  VariationalParams out;
  out.mu = load_params(stem + ".mu.bin", arch);
  const ParamVector sigma = load_params(stem + ".sigma.bin", arch);
  if ((sigma.array() <= 0.0).any()) throw SchemaError("'" + stem + ".sigma.bin' has non-positive entries");
  out.log_sigma = sigma.array().log();
  return out;
}

void save_samples(const std::string& path, const NetworkArch& arch, const PosteriorSamples& samples,
                  const std::string& extra_json) {
  samples.validate();
  if (static_cast<std::size_t>(samples.samples.cols()) != arch.num_params())
    throw ShapeError("save_samples: parameter length mismatch");
  nlohmann::json header = nlohmann::json::parse(extra_json);
  header["method"] = samples.method;
  header["seed"] = samples.seed;
  const auto& d = samples.diagnostics;
  header["diagnostics"] = {{"acceptance_rate", d.acceptance_rate}, {"final_step_size", d.final_step_size},
                           {"iterations", d.iterations},           {"proposals", d.proposals},
                           {"accepted", d.accepted},               {"step_retries", d.step_retries}};
  const std::string text = header.dump();

  Writer out;
  out.bytes(kSamplesMagic, 8);
  const auto fp = arch_fingerprint(arch);
  out.bytes(fp.data(), fp.size());
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.bytes(text.data(), text.size());
  const auto s = static_cast<std::uint64_t>(samples.samples.rows());
  const auto m = static_cast<std::uint64_t>(samples.samples.cols());
  out.u64(s);
  out.u64(m);
  for (Eigen::Index i = 0; i < samples.samples.rows(); ++i) {
    const ParamVector row = samples.samples.row(i).transpose();
    out.f64s(row.data(), static_cast<std::size_t>(m));
  }
  out.save(path);
}

LoadedSamples load_samples(const std::string& path, const NetworkArch& arch) {
  Reader in(path);
  in.expect(kSamplesMagic);
  in.expect_fingerprint(arch);
  LoadedSamples out;
  out.header_json.resize(in.u32());
  in.bytes(out.header_json.data(), out.header_json.size());
  const std::uint64_t s = in.u64();
  const std::uint64_t m = in.u64();
  if (m != arch.num_params()) throw SchemaError("'" + path + "' has the wrong parameter count");
  out.samples.samples.resize(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(m));
  ParamVector row(static_cast<Eigen::Index>(m));
  for (std::uint64_t i = 0; i < s; ++i) {
    in.bytes(row.data(), m * 8);
    out.samples.samples.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  in.done();
  const auto header = nlohmann::json::parse(out.header_json);
  out.samples.method = header.value("method", "");
  out.samples.seed = header.value("seed", std::uint64_t{0});
  if (header.contains("diagnostics")) {
    const auto& d = header["diagnostics"];
    auto& dd = out.samples.diagnostics;
    dd.acceptance_rate = d.value("acceptance_rate", 0.0);
    dd.final_step_size = d.value("final_step_size", 0.0);
    dd.iterations = d.value("iterations", std::size_t{0});
    dd.proposals = d.value("proposals", std::size_t{0});
    dd.accepted = d.value("accepted", std::size_t{0});
    dd.step_retries = d.value("step_retries", std::size_t{0});
  }
  return out;
}

}  // namespace ocbnn
