#ifndef DDL_SPARSE_CODING_HPP
#define DDL_SPARSE_CODING_HPP

// Traditional sparse coding: greedy l0-constrained least squares (OMP).
//
// The solver works purely in Gram space (A^T A, A^T b, ||b||^2), in the style
// of Batch-OMP, so the same kernel serves single-signal encoding, batch
// encoding with a shared Gram matrix, the stacked Newton systems of
// discriminative sparse coding, and identity-augmented robust encoding.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddl/errors.hpp"
#include "ddl/parallel.hpp"

namespace ddl {

using Eigen::Index;

/// A K-dimensional vector with a short list of nonzero coefficients.
/// Indices are strictly increasing; stored values are never exactly zero.
struct SparseCode {
  std::vector<Index> indices;
  std::vector<double> values;
  Index ambient_dim = 0;

  SparseCode() = default;
  explicit SparseCode(Index dim) : ambient_dim(dim) {}

  std::size_t nnz() const { return indices.size(); }
  bool empty() const { return indices.empty(); }

  Eigen::VectorXd to_dense() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(ambient_dim);
    for (std::size_t s = 0; s < indices.size(); ++s) x[indices[s]] = values[s];
    return x;
  }

  /// v^T x for a dense v of length ambient_dim (or longer; extra entries ignored).
  template <class Vec>
  double dot(const Vec& v) const {
    double acc = 0.0;
    for (std::size_t s = 0; s < indices.size(); ++s) acc += v[indices[s]] * values[s];
    return acc;
  }

  double squared_norm() const {
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return acc;
  }

  static SparseCode from_dense(const Eigen::Ref<const Eigen::VectorXd>& x) {
    SparseCode c(x.size());
    for (Index k = 0; k < x.size(); ++k) {
      if (x[k] != 0.0) {
        c.indices.push_back(k);
        c.values.push_back(x[k]);
      }
    }
    return c;
  }

  friend bool operator==(const SparseCode&, const SparseCode&) = default;
};

/// ||a - b||_2 for two codes over the same ambient dimension.
inline double code_distance(const SparseCode& a, const SparseCode& b) {
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.nnz() || j < b.nnz()) {
    if (j == b.nnz() || (i < a.nnz() && a.indices[i] < b.indices[j])) {
      acc += a.values[i] * a.values[i];
      ++i;
    } else if (i == a.nnz() || b.indices[j] < a.indices[i]) {
      acc += b.values[j] * b.values[j];
      ++j;
    } else {
      const double d = a.values[i] - b.values[j];
      acc += d * d;
      ++i;
      ++j;
    }
  }
  return std::sqrt(acc);
}

/// D x for a sparse x.
inline Eigen::VectorXd apply(const Eigen::MatrixXd& atoms, const SparseCode& code) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(atoms.rows());
  for (std::size_t s = 0; s < code.nnz(); ++s) out.noalias() += code.values[s] * atoms.col(code.indices[s]);
  return out;
}

/// d x K matrix whose columns are unit-norm atoms.
class Dictionary {
 public:
  static constexpr double kNormTolerance = 1e-9;

  Dictionary() = default;

  /// Takes atoms that are already unit norm; throws ConfigError otherwise.
  explicit Dictionary(Eigen::MatrixXd atoms) : atoms_(std::move(atoms)) {
    if (atoms_.rows() < 1 || atoms_.cols() < 1) throw ConfigError("dictionary must be at least 1x1");
    if (!atoms_.allFinite()) throw ConfigError("dictionary has non-finite entries");
    for (Index k = 0; k < atoms_.cols(); ++k) {
      if (std::abs(atoms_.col(k).norm() - 1.0) > kNormTolerance) {
        throw ConfigError("dictionary atom " + std::to_string(k) + " is not unit norm");
      }
    }
  }

  /// Normalizes every column; zero columns are rejected.
  static Dictionary normalized(Eigen::MatrixXd atoms) {
    for (Index k = 0; k < atoms.cols(); ++k) {
      const double n = atoms.col(k).norm();
      if (!(n > 0.0)) throw ConfigError("cannot normalize a zero atom");
      atoms.col(k) /= n;
    }
    return Dictionary(std::move(atoms));
  }

  const Eigen::MatrixXd& atoms() const { return atoms_; }
  Index dim() const { return atoms_.rows(); }
  Index size() const { return atoms_.cols(); }
  bool empty() const { return atoms_.size() == 0; }

  friend bool operator==(const Dictionary& a, const Dictionary& b) {
    return a.atoms_.rows() == b.atoms_.rows() && a.atoms_.cols() == b.atoms_.cols() &&
           a.atoms_ == b.atoms_;
  }

 private:
  Eigen::MatrixXd atoms_;
};

/// Anything that can hand out columns and the diagonal of a Gram matrix A^T A.
template <class G>
concept GramOperator = requires(const G& g, Index k, Eigen::VectorXd& out) {
  { g.size() } -> std::convertible_to<Index>;
  { g.diagonal(k) } -> std::convertible_to<double>;
  g.column(k, out);
};

/// Gram matrix of an explicit atom matrix. Columns are computed as
/// A^T a_k, either on demand or once up front; both paths run the same
/// expression so they agree bit for bit.
class AtomGram {
 public:
  AtomGram(const Eigen::MatrixXd& atoms, bool precompute) : atoms_(&atoms) {
    diag_.resize(atoms.cols());
    for (Index k = 0; k < atoms.cols(); ++k) diag_[k] = atoms.col(k).squaredNorm();
    if (precompute) {
      auto full = std::make_shared<Eigen::MatrixXd>(atoms.cols(), atoms.cols());
      Eigen::VectorXd col(atoms.cols());
      for (Index k = 0; k < atoms.cols(); ++k) {
        compute_column(k, col);
        full->col(k) = col;
      }
      full_ = std::move(full);
    }
  }

  Index size() const { return atoms_->cols(); }
  double diagonal(Index k) const { return diag_[k]; }
  void column(Index k, Eigen::VectorXd& out) const {
    if (full_) {
      out = full_->col(k);
    } else {
      compute_column(k, out);
    }
  }

  /// Full Gram matrix, computing it if it was not precomputed.
  Eigen::MatrixXd matrix() const {
    if (full_) return *full_;
    Eigen::MatrixXd g(size(), size());
    Eigen::VectorXd col(size());
    for (Index k = 0; k < size(); ++k) {
      compute_column(k, col);
      g.col(k) = col;
    }
    return g;
  }

  Eigen::VectorXd correlations(const Eigen::VectorXd& signal) const {
    Eigen::VectorXd c(size());
    c.noalias() = atoms_->transpose() * signal;
    return c;
  }

 private:
  void compute_column(Index k, Eigen::VectorXd& out) const {
    out.resize(atoms_->cols());
    out.noalias() = atoms_->transpose() * atoms_->col(k);
  }

  const Eigen::MatrixXd* atoms_;
  Eigen::VectorXd diag_;
  std::shared_ptr<const Eigen::MatrixXd> full_;
};

/// A fully materialized Gram matrix.
class DenseGram {
 public:
  explicit DenseGram(const Eigen::MatrixXd& gram) : gram_(&gram) {}
  Index size() const { return gram_->cols(); }
  double diagonal(Index k) const { return (*gram_)(k, k); }
  void column(Index k, Eigen::VectorXd& out) const { out = gram_->col(k); }

 private:
  const Eigen::MatrixXd* gram_;
};

inline double default_residual_tol(double signal_norm) { return 1e-9 * signal_norm; }

namespace detail {

// Batch-OMP over a Gram operator. Selection maximizes |a_k^T r| / ||a_k||,
// which is the usual correlation rule when atoms are unit norm. Ties go to
// the lower index. The support Cholesky factor is grown one row at a time.
template <GramOperator Gram>
SparseCode omp_kernel(const Gram& gram, const Eigen::VectorXd& alpha0, double signal_sq, int sparsity,
                      double residual_tol) {
  const Index K = gram.size();
  SparseCode code(K);
  if (sparsity <= 0 || K == 0) return code;
  if (!(signal_sq > 0.0) || signal_sq <= residual_tol * residual_tol) return code;

  const int T = static_cast<int>(std::min<Index>(sparsity, K));
  std::vector<double> inv_norm(K, 0.0);
  for (Index k = 0; k < K; ++k) {
    const double g = gram.diagonal(k);
    inv_norm[k] = g > 0.0 ? 1.0 / std::sqrt(g) : 0.0;
  }

  Eigen::VectorXd alpha = alpha0;
  std::vector<char> in_support(K, 0);
  std::vector<Index> support;
  support.reserve(T);
  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(T, T);   // lower triangular
  Eigen::MatrixXd selected_cols(K, T);                  // Gram columns of the support
  std::vector<double> alpha_support;
  std::vector<double> coeffs;
  Eigen::VectorXd col(K);

  for (int it = 0; it < T; ++it) {
    Index best = -1;
    double best_value = 0.0;
    for (Index k = 0; k < K; ++k) {
      if (in_support[k] || inv_norm[k] == 0.0) continue;
      const double v = std::abs(alpha[k]) * inv_norm[k];
      if (v > best_value) {
        best_value = v;
        best = k;
      }
    }
    if (best < 0) break;

    gram.column(best, col);
    const double gkk = gram.diagonal(best);

    // Forward substitution for the new Cholesky row.
    std::vector<double> w(it);
    double w_sq = 0.0;
    for (int r = 0; r < it; ++r) {
      double acc = col[support[r]];
      for (int c = 0; c < r; ++c) acc -= chol(r, c) * w[c];
      w[r] = acc / chol(r, r);
      w_sq += w[r] * w[r];
    }
    double pivot_sq = gkk - w_sq;
    const double singular_level = 1e-12 * gkk;
    if (pivot_sq <= singular_level) {
      pivot_sq += 1e-12 * gkk;  // jitter
      if (pivot_sq <= singular_level) break;  // still singular: drop the atom
    }
    for (int c = 0; c < it; ++c) chol(it, c) = w[c];
    chol(it, it) = std::sqrt(pivot_sq);

    support.push_back(best);
    in_support[best] = 1;
    selected_cols.col(it) = col;
    alpha_support.push_back(alpha0[best]);

    // Solve L L^T g = alpha0_I.
    const int n = it + 1;
    std::vector<double> y(n);
    for (int r = 0; r < n; ++r) {
      double acc = alpha_support[r];
      for (int c = 0; c < r; ++c) acc -= chol(r, c) * y[c];
      y[r] = acc / chol(r, r);
    }
    coeffs.assign(n, 0.0);
    for (int r = n - 1; r >= 0; --r) {
      double acc = y[r];
      for (int c = r + 1; c < n; ++c) acc -= chol(c, r) * coeffs[c];
      coeffs[r] = acc / chol(r, r);
    }

    double fitted = 0.0;
    for (int s = 0; s < n; ++s) fitted += coeffs[s] * alpha_support[s];
    const double residual_sq = signal_sq - fitted;
    if (n == T || residual_sq <= residual_tol * residual_tol) break;

    for (Index k = 0; k < K; ++k) {
      double acc = alpha0[k];
      for (int s = 0; s < n; ++s) acc -= selected_cols(k, s) * coeffs[s];
      alpha[k] = acc;
    }
  }

  std::vector<std::size_t> order(support.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return support[a] < support[b]; });
  for (std::size_t o : order) {
    if (coeffs[o] == 0.0) continue;
    code.indices.push_back(support[o]);
    code.values.push_back(coeffs[o]);
  }
  return code;
}

inline void check_budget(Index atoms, int sparsity) {
  if (sparsity < 0) throw ConfigError("sparsity budget must be non-negative");
  if (sparsity > atoms) {
    throw ConfigError("sparsity budget " + std::to_string(sparsity) + " exceeds atom count " +
                      std::to_string(atoms));
  }
}

inline void check_signal(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& signal) {
  if (signal.size() != atoms.rows()) {
    throw DimensionError("signal has dimension " + std::to_string(signal.size()) + ", dictionary expects " +
                         std::to_string(atoms.rows()));
  }
  if (!signal.allFinite()) throw ConfigError("signal has non-finite entries");
}

}  // namespace detail

/// Encodes one signal with at most `sparsity` atoms. Works for any atom
/// matrix with nonzero columns; a unit-norm Dictionary is the usual case.
/// residual_tol defaults to 1e-9 * ||signal||.
inline SparseCode omp_encode(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& signal, int sparsity,
                             std::optional<double> residual_tol = std::nullopt) {
  detail::check_signal(atoms, signal);
  detail::check_budget(atoms.cols(), sparsity);
  if (residual_tol && *residual_tol < 0.0) throw ConfigError("residual_tol must be non-negative");
  const AtomGram gram(atoms, /*precompute=*/false);
  const double signal_sq = signal.squaredNorm();
  const double tol = residual_tol.value_or(default_residual_tol(std::sqrt(signal_sq)));
  return detail::omp_kernel(gram, gram.correlations(signal), signal_sq, sparsity, tol);
}

inline SparseCode omp_encode(const Dictionary& dict, const Eigen::VectorXd& signal, int sparsity,
                             std::optional<double> residual_tol = std::nullopt) {
  return omp_encode(dict.atoms(), signal, sparsity, residual_tol);
}

/// Encodes every column of `signals`. The Gram matrix is built once; results
/// are identical to calling omp_encode column by column, for any thread count.
inline std::vector<SparseCode> batch_encode(const Eigen::MatrixXd& atoms, const Eigen::MatrixXd& signals,
                                            int sparsity, std::optional<double> residual_tol = std::nullopt,
                                            int threads = 1) {
  if (signals.cols() > 0 && signals.rows() != atoms.rows()) {
    throw DimensionError("signals have dimension " + std::to_string(signals.rows()) +
                         ", dictionary expects " + std::to_string(atoms.rows()));
  }
  detail::check_budget(atoms.cols(), sparsity);
  if (residual_tol && *residual_tol < 0.0) throw ConfigError("residual_tol must be non-negative");
  std::vector<SparseCode> codes(static_cast<std::size_t>(signals.cols()));
  if (signals.cols() == 0) return codes;
  if (!signals.allFinite()) throw ConfigError("signals have non-finite entries");
  const AtomGram gram(atoms, /*precompute=*/true);
  parallel_for(codes.size(), threads, [&](std::size_t i) {
    const Eigen::VectorXd y = signals.col(static_cast<Index>(i));
    const double signal_sq = y.squaredNorm();
    const double tol = residual_tol.value_or(default_residual_tol(std::sqrt(signal_sq)));
    codes[i] = detail::omp_kernel(gram, gram.correlations(y), signal_sq, sparsity, tol);
  });
  return codes;
}

inline std::vector<SparseCode> batch_encode(const Dictionary& dict, const Eigen::MatrixXd& signals, int sparsity,
                                            std::optional<double> residual_tol = std::nullopt, int threads = 1) {
  return batch_encode(dict.atoms(), signals, sparsity, residual_tol, threads);
}

/// ||signal - D code||^2.
inline double reconstruction_error(const Eigen::MatrixXd& atoms, const SparseCode& code,
                                   const Eigen::VectorXd& signal) {
  if (signal.size() != atoms.rows() || code.ambient_dim != atoms.cols()) {
    throw DimensionError("reconstruction_error: incompatible dimensions");
  }
  return (signal - apply(atoms, code)).squaredNorm();
}

inline double reconstruction_error(const Dictionary& dict, const SparseCode& code, const Eigen::VectorXd& signal) {
  return reconstruction_error(dict.atoms(), code, signal);
}

}  // namespace ddl

#endif  // DDL_SPARSE_CODING_HPP
