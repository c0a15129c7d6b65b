#ifndef DDL_DATA_IO_HPP
#define DDL_DATA_IO_HPP

// Dataset ingestion (IDX and delimited text), synthetic planted-model data,
// and train/test splitting.

#include <Eigen/Dense>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ddl/classifiers.hpp"
#include "ddl/errors.hpp"
#include "ddl/rng.hpp"
#include "ddl/sparse_coding.hpp"

namespace ddl {

struct Dataset {
  Eigen::MatrixXd samples;  // d x N
  std::vector<int> labels;  // class index per sample
  int class_count = 0;
  std::string provenance;

  Index dim() const { return samples.rows(); }
  Index size() const { return samples.cols(); }
  LabelMatrix label_matrix() const { return LabelMatrix::from_classes(labels, class_count); }

  void validate() const {
    if (samples.cols() < 1) throw DataError(DataErrorKind::Format, "dataset is empty");
    if (static_cast<Index>(labels.size()) != samples.cols()) {
      throw DataError(DataErrorKind::CountMismatch, "label count differs from sample count");
    }
    if (!samples.allFinite()) throw DataError(DataErrorKind::NonFinite, "samples contain NaN or Inf");
    for (int l : labels) {
      if (l < 0 || l >= class_count) throw DataError(DataErrorKind::InvalidLabel, "label out of range");
    }
  }
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
  if (buf.size() < offset + 4) throw DataError(DataErrorKind::Truncated, "'" + path + "' ends inside its header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline bool parse_double(const std::string& cell, double& out) {
  std::size_t b = cell.find_first_not_of(" \t\r");
  if (b == std::string::npos) return false;
  std::size_t e = cell.find_last_not_of(" \t\r");
  const std::string s = cell.substr(b, e - b + 1);
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(cell);
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

}  // namespace detail

/// Reads an IDX image file (magic 0x00000803) and IDX label file (magic
/// 0x00000801). Pixels are scaled to [0, 1] and flattened row-major.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  if (img.empty()) throw DataError(DataErrorKind::Truncated, "'" + images_path + "' is empty");
  if (lab.empty()) throw DataError(DataErrorKind::Truncated, "'" + labels_path + "' is empty");

  if (detail::read_be32(img, 0, images_path) != 0x00000803u) {
    throw DataError(DataErrorKind::BadMagic, "'" + images_path + "' is not an IDX image file");
  }
  if (detail::read_be32(lab, 0, labels_path) != 0x00000801u) {
    throw DataError(DataErrorKind::BadMagic, "'" + labels_path + "' is not an IDX label file");
  }
  const std::uint32_t n_img = detail::read_be32(img, 4, images_path);
  const std::uint32_t rows = detail::read_be32(img, 8, images_path);
  const std::uint32_t cols = detail::read_be32(img, 12, images_path);
  const std::uint32_t n_lab = detail::read_be32(lab, 4, labels_path);
  if (n_img != n_lab) {
    throw DataError(DataErrorKind::CountMismatch, std::to_string(n_img) + " images but " + std::to_string(n_lab) +
                                                      " labels");
  }
  const std::size_t d = std::size_t{rows} * cols;
  if (img.size() < 16 + d * n_img) throw DataError(DataErrorKind::Truncated, "'" + images_path + "' is truncated");
  if (lab.size() < 8 + std::size_t{n_lab}) throw DataError(DataErrorKind::Truncated, "'" + labels_path + "' is truncated");

  Dataset ds;
  ds.samples.resize(static_cast<Index>(d), static_cast<Index>(n_img));
  ds.labels.resize(n_img);
  for (std::size_t i = 0; i < n_img; ++i) {
    for (std::size_t p = 0; p < d; ++p) {
      ds.samples(static_cast<Index>(p), static_cast<Index>(i)) = img[16 + i * d + p] / 255.0;
    }
    ds.labels[i] = lab[8 + i];
  }
  ds.class_count = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.provenance = "idx:" + images_path;
  if (n_img == 0) throw DataError(DataErrorKind::Format, "IDX files contain no samples");
  return ds;
}

/// Reads a delimited numeric table. Each row is a sample; `label_column`
/// holds a non-negative integer class index. A first row that does not parse
/// as numbers is treated as a header and skipped.
inline Dataset load_delimited(const std::string& path, char delimiter = ',', int label_column = 0) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrorKind::Io, "cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = detail::split_line(line, delimiter);
    std::vector<double> vals(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size() && numeric; ++c) numeric = detail::parse_double(cells[c], vals[c]);
    if (!numeric) {
      if (rows.empty() && width == 0) {
        width = cells.size();  // header
        continue;
      }
      throw DataError(DataErrorKind::NonNumeric, path + ":" + std::to_string(line_no) + " has a non-numeric cell");
    }
    for (double v : vals) {
      if (!std::isfinite(v)) throw DataError(DataErrorKind::NonFinite, path + ":" + std::to_string(line_no));
    }
    if (width == 0) width = vals.size();
    if (vals.size() != width) {
      throw DataError(DataErrorKind::Ragged, path + ":" + std::to_string(line_no) + " has " +
                                                 std::to_string(vals.size()) + " cells, expected " +
                                                 std::to_string(width));
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError(DataErrorKind::Format, "'" + path + "' has no data rows");
  if (label_column < 0 || static_cast<std::size_t>(label_column) >= width || width < 2) {
    throw DataError(DataErrorKind::Format, "label column " + std::to_string(label_column) + " out of range");
  }

  Dataset ds;
  ds.samples.resize(static_cast<Index>(width - 1), static_cast<Index>(rows.size()));
  ds.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Index r = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (static_cast<int>(c) == label_column) {
        const double l = rows[i][c];
        if (l < 0.0 || l != std::floor(l) || l > 1e9) {
          throw DataError(DataErrorKind::InvalidLabel, "row " + std::to_string(i) + " has label " + std::to_string(l));
        }
        ds.labels[i] = static_cast<int>(l);
      } else {
        ds.samples(r++, static_cast<Index>(i)) = rows[i][c];
      }
    }
  }
  ds.class_count = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.provenance = "csv:" + path;
  return ds;
}

/// Writes label then features per row, 17 significant digits, with a header.
inline void write_delimited(const Dataset& ds, const std::string& path, char delimiter = ',') {
  std::ofstream out(path);
  if (!out) throw DataError(DataErrorKind::Io, "cannot write '" + path + "'");
  out << "label";
  for (Index r = 0; r < ds.dim(); ++r) out << delimiter << 'f' << r;
  out << '\n';
  char buf[32];
  for (Index i = 0; i < ds.size(); ++i) {
    out << ds.labels[static_cast<std::size_t>(i)];
    for (Index r = 0; r < ds.dim(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.samples(r, i));
      out << delimiter << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError(DataErrorKind::Io, "failed writing '" + path + "'");
}

struct SyntheticSpec {
  Index d = 30;
  Index K_true = 40;
  int C = 3;
  Index N = 600;
  int T_true = 3;
  double noise_std = 0.05;
  double label_noise_rate = 0.0;
  double margin = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 1 || K_true < 1 || N < 1 || T_true < 1) throw ConfigError("synthetic spec sizes must be positive");
    if (C < 2) throw ConfigError("synthetic data needs at least two classes");
    if (T_true > K_true) throw ConfigError("T_true must not exceed K_true");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
    if (!(label_noise_rate >= 0.0 && label_noise_rate < 1.0)) throw ConfigError("label_noise_rate must be in [0, 1)");
    if (!(margin >= 0.0)) throw ConfigError("margin must be non-negative");
  }
};

struct SyntheticBundle {
  Dataset data;
  Dictionary dictionary;
  std::vector<SparseCode> codes;
  ClassifierBank classifiers;
  std::vector<int> clean_labels;
};

/// Planted model: unit-norm Gaussian dictionary, T_true-sparse codes with
/// coefficients uniform in +-[0.5, 1.5], labels = argmax of planted linear
/// scores with a top-two gap of at least `margin` (enforced by rejection),
/// additive Gaussian noise, then each label flipped to a different random
/// class with probability label_noise_rate.
inline SyntheticBundle generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng = make_rng(spec.seed, RngStream::Synthetic);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::bernoulli_distribution coin(0.5);

  Eigen::MatrixXd atoms(spec.d, spec.K_true);
  for (Index k = 0; k < spec.K_true; ++k) {
    do {
      for (Index r = 0; r < spec.d; ++r) atoms(r, k) = normal(rng);
    } while (atoms.col(k).squaredNorm() == 0.0);
  }
  SyntheticBundle out;
  out.dictionary = Dictionary::normalized(std::move(atoms));

  ClassifierBank bank{Eigen::MatrixXd(spec.K_true, spec.C), Eigen::VectorXd::Zero(spec.C), LossKind::square()};
  for (Index k = 0; k < spec.K_true; ++k) {
    for (int j = 0; j < spec.C; ++j) bank.weights(k, j) = normal(rng);
  }
  out.classifiers = bank;

  std::vector<Index> atom_ids(static_cast<std::size_t>(spec.K_true));
  std::iota(atom_ids.begin(), atom_ids.end(), Index{0});
  out.codes.reserve(static_cast<std::size_t>(spec.N));
  out.clean_labels.reserve(static_cast<std::size_t>(spec.N));
  long rejections = 0;
  while (static_cast<Index>(out.codes.size()) < spec.N) {
    std::shuffle(atom_ids.begin(), atom_ids.end(), rng);
    std::vector<Index> support(atom_ids.begin(), atom_ids.begin() + spec.T_true);
    std::sort(support.begin(), support.end());
    SparseCode x(spec.K_true);
    for (Index k : support) {
      x.indices.push_back(k);
      x.values.push_back(coin(rng) ? magnitude(rng) : -magnitude(rng));
    }
    const Eigen::VectorXd s = decision_values(bank, x);
    Index top = 0;
    for (Index j = 1; j < s.size(); ++j) {
      if (s[j] > s[top]) top = j;
    }
    double runner_up = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < s.size(); ++j) {
      if (j != top) runner_up = std::max(runner_up, s[j]);
    }
    if (s[top] - runner_up < spec.margin) {
      if (++rejections > 100000) throw ConfigError("synthetic margin is infeasible after 1e5 rejections");
      continue;
    }
    out.codes.push_back(std::move(x));
    out.clean_labels.push_back(static_cast<int>(top));
  }

  Dataset& ds = out.data;
  ds.samples.resize(spec.d, spec.N);
  for (Index i = 0; i < spec.N; ++i) {
    ds.samples.col(i) = apply(out.dictionary.atoms(), out.codes[static_cast<std::size_t>(i)]);
    if (spec.noise_std > 0.0) {
      for (Index r = 0; r < spec.d; ++r) ds.samples(r, i) += spec.noise_std * normal(rng);
    }
  }
  ds.labels = out.clean_labels;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> other(1, spec.C - 1);
  for (auto& l : ds.labels) {
    if (unit(rng) < spec.label_noise_rate) l = (l + other(rng)) % spec.C;
  }
  ds.class_count = spec.C;
  ds.provenance = "synthetic:seed=" + std::to_string(spec.seed);
  return out;
}

/// Columns `idx` of a dataset.
inline Dataset subset(const Dataset& ds, const std::vector<Index>& idx) {
  Dataset out;
  out.samples.resize(ds.dim(), static_cast<Index>(idx.size()));
  out.labels.reserve(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.samples.col(static_cast<Index>(c)) = ds.samples.col(idx[c]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(idx[c])]);
  }
  out.class_count = ds.class_count;
  out.provenance = ds.provenance;
  return out;
}

struct Split {
  Dataset train;
  Dataset test;
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;
};

/// Disjoint, exhaustive split with round(f * N) test samples. Stratified mode
/// shares that total across classes by largest remainder (ties to the lower
/// class), keeping at least one sample of each class on both sides, so every
/// class needs two or more samples.
inline Split split(const Dataset& ds, double test_fraction, std::uint64_t seed, bool stratified) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0, 1)");
  if (ds.size() < 2) throw ConfigError("need at least two samples to split");
  std::mt19937_64 rng = make_rng(seed, RngStream::Split);
  Split s;
  const auto total_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size()))), 1,
      static_cast<std::size_t>(ds.size()) - 1);
  if (!stratified) {
    std::vector<Index> idx(static_cast<std::size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    s.test_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(total_test));
    s.train_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(total_test), idx.end());
  } else {
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(ds.class_count));
    for (Index i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    std::vector<std::size_t> quota(by_class.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainder;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (by_class[c].empty()) continue;
      if (by_class[c].size() < 2) throw ConfigError("class " + std::to_string(c) + " has fewer than 2 samples");
      const double exact = test_fraction * static_cast<double>(by_class[c].size());
      quota[c] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[c];
      remainder.emplace_back(-(exact - std::floor(exact)), c);
    }
    std::sort(remainder.begin(), remainder.end());
    for (std::size_t r = 0; assigned < total_test && r < remainder.size(); ++r, ++assigned) ++quota[remainder[r].second];
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& pool = by_class[c];
      if (pool.empty()) continue;
      std::shuffle(pool.begin(), pool.end(), rng);
      const std::size_t n_test = std::clamp<std::size_t>(quota[c], 1, pool.size() - 1);
      s.test_indices.insert(s.test_indices.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
      s.train_indices.insert(s.train_indices.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_test), pool.end());
    }
  }
  std::sort(s.train_indices.begin(), s.train_indices.end());
  std::sort(s.test_indices.begin(), s.test_indices.end());
  s.train = subset(ds, s.train_indices);
  s.test = subset(ds, s.test_indices);
  return s;
}

}  // namespace ddl

#endif  // DDL_DATA_IO_HPP
