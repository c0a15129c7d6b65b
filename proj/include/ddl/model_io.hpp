#ifndef DDL_MODEL_IO_HPP
#define DDL_MODEL_IO_HPP

// Binary model container. Layout (all integers and floats little-endian) is
// documented in docs/model_format.md. save followed by load is bit-exact.

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ddl/config.hpp"
#include "ddl/errors.hpp"
#include "ddl/trainer.hpp"

namespace ddl {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[4] = {'D', 'D', 'L', 'M'};

/// 64-bit FNV-1a, used for the container checksum and for file digests.
inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf_.push_back(static_cast<unsigned char>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) buf_.push_back(static_cast<unsigned char>(v >> s));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) {
    u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& buf, std::size_t end) : buf_(buf), end_(end) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int s = 0; s < 32; s += 8) v |= std::uint32_t{buf_[pos_++]} << s;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int s = 0; s < 64; s += 8) v |= std::uint64_t{buf_[pos_++]} << s;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw DataError(DataErrorKind::Truncated, "model file ends early");
  }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline void write_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  }
}

inline Eigen::MatrixXd read_matrix(ByteReader& r, Index rows, Index cols) {
  r.need(static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 8);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = r.f64();
  }
  return m;
}

// Guards allocations driven by header fields against corrupt files.
inline Index checked_dim(std::uint64_t v, const char* what) {
  if (v > (std::uint64_t{1} << 32)) throw DataError(DataErrorKind::Format, std::string("implausible ") + what);
  return static_cast<Index>(v);
}

}  // namespace detail

inline std::vector<unsigned char> serialize_model(const DdlModel& m) {
  const Index d = m.dictionary.dim();
  const Index K = m.dictionary.size();
  const Index C = m.classifiers.classes();
  const Index N = m.sigma.size();
  if (m.classifiers.weights.rows() != K || m.classifiers.biases.size() != C || m.gamma.size() != C) {
    throw DimensionError("serialize_model: inconsistent model dimensions");
  }
  if (!m.codes.empty() && static_cast<Index>(m.codes.size()) != N) {
    throw DimensionError("serialize_model: code count differs from sigma length");
  }
  detail::ByteWriter w;
  w.raw(kModelMagic, 4);
  w.u32(kModelFormatVersion);
  w.u64(static_cast<std::uint64_t>(d));
  w.u64(static_cast<std::uint64_t>(K));
  w.u64(static_cast<std::uint64_t>(C));
  w.u64(static_cast<std::uint64_t>(N));
  w.u32(static_cast<std::uint32_t>(m.config.T));
  w.u32(static_cast<std::uint32_t>(m.config.loss.family));
  w.f64(m.config.loss.rho);
  w.f64(m.config.loss.eps);
  w.u8(m.baseline ? 1 : 0);
  w.i32(m.best_iteration);
  detail::write_matrix(w, m.dictionary.atoms());
  detail::write_matrix(w, m.classifiers.weights);
  for (Index j = 0; j < C; ++j) w.f64(m.classifiers.biases[j]);
  for (Index i = 0; i < N; ++i) w.f64(m.sigma[i]);
  for (Index j = 0; j < C; ++j) w.f64(m.gamma[j]);
  w.u64(m.trace.size());
  for (const auto& t : m.trace) {
    w.f64(t.residual_sq);
    w.f64(t.representation);
    w.f64(t.representation_log);
    w.f64(t.classification);
    w.f64(t.classification_log);
  }
  w.bytes(config_to_text(m.config));
  w.u64(m.codes.size());
  for (const auto& c : m.codes) {
    w.u32(static_cast<std::uint32_t>(c.nnz()));
    for (std::size_t s = 0; s < c.nnz(); ++s) {
      w.u64(static_cast<std::uint64_t>(c.indices[s]));
      w.f64(c.values[s]);
    }
  }
  auto& buf = w.buffer();
  w.u64(fnv1a64(buf.data(), buf.size()));
  return std::move(buf);
}

inline DdlModel deserialize_model(const std::vector<unsigned char>& buf) {
  if (buf.size() < 4 || std::memcmp(buf.data(), kModelMagic, 4) != 0) {
    throw DataError(DataErrorKind::BadMagic, "not a model file");
  }
  if (buf.size() < 12) throw DataError(DataErrorKind::Truncated, "model file ends early");
  const std::size_t body = buf.size() - 8;
  std::uint64_t stored = 0;
  for (int b = 0; b < 8; ++b) stored |= std::uint64_t{buf[body + static_cast<std::size_t>(b)]} << (8 * b);
  if (stored != fnv1a64(buf.data(), body)) {
    throw DataError(DataErrorKind::Format, "model checksum mismatch (corrupt or truncated file)");
  }
  detail::ByteReader r(buf, body);
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw DataError(DataErrorKind::Format, "unsupported model format version " + std::to_string(version));
  }
  const Index d = detail::checked_dim(r.u64(), "dimension");
  const Index K = detail::checked_dim(r.u64(), "atom count");
  const Index C = detail::checked_dim(r.u64(), "class count");
  const Index N = detail::checked_dim(r.u64(), "sample count");

  DdlModel m;
  const std::uint32_t T = r.u32();
  const std::uint32_t family = r.u32();
  if (family > static_cast<std::uint32_t>(LossFamily::SmoothHinge)) {
    throw DataError(DataErrorKind::Format, "unknown loss family " + std::to_string(family));
  }
  LossKind loss;
  loss.family = static_cast<LossFamily>(family);
  loss.rho = r.f64();
  loss.eps = r.f64();
  m.baseline = r.u8() != 0;
  m.best_iteration = r.i32();

  Eigen::MatrixXd atoms = detail::read_matrix(r, d, K);
  try {
    m.dictionary = Dictionary(std::move(atoms));
  } catch (const std::invalid_argument& e) {
    throw DataError(DataErrorKind::Format, std::string("stored dictionary is invalid: ") + e.what());
  }
  m.classifiers.weights = detail::read_matrix(r, K, C);
  m.classifiers.biases.resize(C);
  for (Index j = 0; j < C; ++j) m.classifiers.biases[j] = r.f64();
  m.classifiers.loss = loss;
  r.need(static_cast<std::uint64_t>(N) * 8);
  m.sigma.resize(N);
  for (Index i = 0; i < N; ++i) m.sigma[i] = r.f64();
  m.gamma.resize(C);
  for (Index j = 0; j < C; ++j) m.gamma[j] = r.f64();

  const std::uint64_t trace_n = r.u64();
  r.need(trace_n * 40);
  m.trace.resize(static_cast<std::size_t>(trace_n));
  for (auto& t : m.trace) {
    t.residual_sq = r.f64();
    t.representation = r.f64();
    t.representation_log = r.f64();
    t.classification = r.f64();
    t.classification_log = r.f64();
  }
  try {
    m.config = config_from_text(r.bytes());
  } catch (const ConfigError& e) {
    throw DataError(DataErrorKind::Format, std::string("stored config is invalid: ") + e.what());
  }
  if (m.config.T != static_cast<int>(T) || m.config.loss != loss || m.config.K != K) {
    throw DataError(DataErrorKind::Format, "stored config disagrees with the model header");
  }

  const std::uint64_t code_n = r.u64();
  if (code_n != 0 && code_n != static_cast<std::uint64_t>(N)) {
    throw DataError(DataErrorKind::Format, "code count differs from sample count");
  }
  r.need(code_n * 4);
  m.codes.reserve(static_cast<std::size_t>(code_n));
  for (std::uint64_t i = 0; i < code_n; ++i) {
    SparseCode c(K);
    const std::uint32_t nnz = r.u32();
    r.need(std::uint64_t{nnz} * 16);
    for (std::uint32_t s = 0; s < nnz; ++s) {
      const std::uint64_t idx = r.u64();
      if (idx >= static_cast<std::uint64_t>(K)) throw DataError(DataErrorKind::Format, "code index out of range");
      c.indices.push_back(static_cast<Index>(idx));
      c.values.push_back(r.f64());
    }
    m.codes.push_back(std::move(c));
  }
  if (r.position() != body) throw DataError(DataErrorKind::Format, "trailing bytes in model file");
  return m;
}

inline void save_model(const DdlModel& m, const std::string& path) {
  const auto buf = serialize_model(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::Io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError(DataErrorKind::Io, "failed writing '" + path + "'");
}

inline DdlModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, "cannot open model '" + path + "'");
  const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(buf);
}

}  // namespace ddl

#endif  // DDL_MODEL_IO_HPP
