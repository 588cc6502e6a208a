#include "stepscore/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace stepscore::tensor {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'C', 'K', 'P', 'T', 0, 1};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void matrix(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  Matrix matrix(std::uint32_t rows, std::uint32_t cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::size_t pos_ = 0;

 private:
  const std::vector<std::uint8_t>& bytes_;
};

}  // namespace

std::vector<std::uint8_t> serialize(const ParamStore& params, const std::map<std::string, std::string>& meta) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kCheckpointVersion);
  w.u64(params.step);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.param.rows()));
    w.u32(static_cast<std::uint32_t>(e.param.cols()));
    w.matrix(e.param.value());
    w.matrix(e.first_moment);
    w.matrix(e.second_moment);
  }
  return std::move(w.bytes);
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
  r.pos_ = 8;
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.step = r.u64();
  const auto nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = r.str();
    c.meta[k] = r.str();
  }
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    ParamStore::Entry e;
    e.name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    e.param = Tensor::parameter(r.matrix(rows, cols));
    e.first_moment = r.matrix(rows, cols);
    e.second_moment = r.matrix(rows, cols);
    c.tensors.push_back(std::move(e));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta) {
  const auto bytes = serialize(params, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

void restore(ParamStore& params, const Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& stored : ckpt.tensors) {
    if (stored.name.rfind(prefix, 0) != 0) continue;
    Tensor p = params.get(stored.name);
    if (p.rows() != stored.param.rows() || p.cols() != stored.param.cols()) {
      throw ShapeError("checkpoint: '" + stored.name + "' stored as " + stored.param.shape_string() +
                       " but model expects " + p.shape_string());
    }
    p.mutable_value() = stored.param.value();
    for (auto& e : params.entries()) {
      if (e.name == stored.name) {
        e.first_moment = stored.first_moment;
        e.second_moment = stored.second_moment;
      }
    }
  }
  if (prefix.empty()) params.step = ckpt.step;
}

}  // namespace stepscore::tensor
