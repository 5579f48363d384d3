#include "swnf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "swnf/error.hpp"

namespace swnf {

namespace {

constexpr char kMagic[4] = {'S', 'W', 'N', 'F'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  template <typename T>
  void little(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::format_error, "checkpoint is truncated");
  }
  template <typename T>
  T little() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool magic() {
    need(4);
    const bool ok = std::memcmp(bytes_.data() + pos_, kMagic, 4) == 0;
    pos_ += 4;
    return ok;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const FlowModel& model) {
  const auto arch = model.architecture();
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(arch.dim));
  w.u32(static_cast<std::uint32_t>(arch.n_layers));
  w.u32(static_cast<std::uint32_t>(arch.hidden.size()));
  for (std::size_t h : arch.hidden) w.u32(static_cast<std::uint32_t>(h));
  for (const auto& p : model.parameters()) {
    w.u32(static_cast<std::uint32_t>(p.rank()));
    for (std::size_t e : p.shape()) w.u64(e);
    for (double v : p.values()) w.f64(v);
  }
  return w.take();
}

FlowModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (!r.magic()) fail(ErrorCode::format_error, "not a flow checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::format_error, "unsupported checkpoint version " + std::to_string(version));
  }
  FlowArchitecture arch;
  arch.dim = r.u32();
  arch.n_layers = r.u32();
  const auto n_hidden = r.u32();
  if (arch.dim < 2 || arch.dim > 4096 || arch.n_layers < 1 || arch.n_layers > 4096 ||
      n_hidden > 64) {
    fail(ErrorCode::format_error, "checkpoint header has implausible architecture");
  }
  arch.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) {
    const auto h = r.u32();
    if (h < 1 || h > (1u << 20)) fail(ErrorCode::format_error, "checkpoint hidden width out of range");
    arch.hidden.push_back(h);
  }

  FlowModel model = init_model(arch, 0);
  for (auto& p : model.parameters()) {
    const auto rank = r.u32();
    if (rank != p.rank()) fail(ErrorCode::format_error, "checkpoint parameter rank mismatch");
    for (std::size_t e : p.shape()) {
      if (r.u64() != e) fail(ErrorCode::format_error, "checkpoint parameter shape mismatch");
    }
    r.need(p.size() * 8);
    for (double& v : p.mutable_values()) v = r.f64();
  }
  if (!r.done()) fail(ErrorCode::format_error, "checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io_error, "failed writing checkpoint " + path.string());
}

FlowModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace swnf
