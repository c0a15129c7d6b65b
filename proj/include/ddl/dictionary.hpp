#ifndef DDL_DICTIONARY_HPP
#define DDL_DICTIONARY_HPP

// Dictionary initialization and the single-sweep, sample-weighted K-SVD update.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ddl/classifiers.hpp"
#include "ddl/errors.hpp"
#include "ddl/rng.hpp"
#include "ddl/sparse_coding.hpp"

namespace ddl {

enum class InitKind { FromSamples, GaussianRandom };

struct InitScheme {
  InitKind kind = InitKind::FromSamples;
  std::uint64_t seed = 0;
};

namespace detail {

inline Eigen::MatrixXd pick_columns(const Eigen::MatrixXd& Y, const std::vector<Index>& cols) {
  Eigen::MatrixXd D(Y.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) D.col(static_cast<Index>(k)) = Y.col(cols[k]);
  return D;
}

// Draws `count` distinct nonzero columns from `pool` (already shuffled order).
inline std::vector<Index> take_nonzero(const Eigen::MatrixXd& Y, const std::vector<Index>& pool, std::size_t count) {
  std::vector<Index> out;
  for (Index i : pool) {
    if (out.size() == count) break;
    if (Y.col(i).squaredNorm() > 0.0) out.push_back(i);
  }
  return out;
}

}  // namespace detail

/// Initial dictionary. With labels and FromSamples, draws an even split of
/// training samples per class (remainder to the lowest class indices) without
/// replacement, then normalizes. Zero samples are never drawn. Classes short
/// of samples hand their quota round-robin to the others.
inline Dictionary init_dictionary(const Eigen::MatrixXd& Y, const LabelMatrix* labels, Index K,
                                  const InitScheme& scheme, const std::vector<char>* labeled_mask = nullptr) {
  if (K < 1) throw ConfigError("dictionary size K must be at least 1");
  if (Y.rows() < 1) throw ConfigError("data must have at least one row");
  std::mt19937_64 rng = make_rng(scheme.seed, RngStream::DictionaryInit);

  if (scheme.kind == InitKind::GaussianRandom) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd D(Y.rows(), K);
    for (Index k = 0; k < K; ++k) {
      do {
        for (Index r = 0; r < Y.rows(); ++r) D(r, k) = normal(rng);
      } while (D.col(k).squaredNorm() == 0.0);
    }
    return Dictionary::normalized(std::move(D));
  }

  const Index N = Y.cols();
  if (K > N) {
    throw ConfigError("FromSamples initialization needs K <= N (K=" + std::to_string(K) + ", N=" +
                      std::to_string(N) + ")");
  }

  const bool use_classes = labels != nullptr && labels->classes() > 0;
  if (!use_classes) {
    std::vector<Index> pool(static_cast<std::size_t>(N));
    std::iota(pool.begin(), pool.end(), Index{0});
    std::shuffle(pool.begin(), pool.end(), rng);
    auto cols = detail::take_nonzero(Y, pool, static_cast<std::size_t>(K));
    if (static_cast<Index>(cols.size()) < K) throw ConfigError("not enough nonzero samples to draw K atoms");
    return Dictionary::normalized(detail::pick_columns(Y, cols));
  }

  if (labels->samples() != N) throw DimensionError("labels and data disagree on sample count");
  const Index C = labels->classes();
  std::vector<std::vector<Index>> per_class(static_cast<std::size_t>(C));
  for (Index i = 0; i < N; ++i) {
    if (labeled_mask && !(*labeled_mask)[static_cast<std::size_t>(i)]) continue;
    const int c = labels->class_of(i);
    if (c >= 0 && Y.col(i).squaredNorm() > 0.0) per_class[static_cast<std::size_t>(c)].push_back(i);
  }
  for (auto& pool : per_class) std::shuffle(pool.begin(), pool.end(), rng);

  std::vector<std::size_t> quota(static_cast<std::size_t>(C), static_cast<std::size_t>(K / C));
  for (Index c = 0; c < K % C; ++c) ++quota[static_cast<std::size_t>(c)];
  // Move quota that a class cannot fill to classes with spare samples.
  std::size_t deficit = 0;
  for (std::size_t c = 0; c < quota.size(); ++c) {
    if (quota[c] > per_class[c].size()) {
      deficit += quota[c] - per_class[c].size();
      quota[c] = per_class[c].size();
    }
  }
  while (deficit > 0) {
    bool moved = false;
    for (std::size_t c = 0; c < quota.size() && deficit > 0; ++c) {
      if (quota[c] < per_class[c].size()) {
        ++quota[c];
        --deficit;
        moved = true;
      }
    }
    if (!moved) throw ConfigError("not enough nonzero labeled samples to draw K atoms");
  }

  std::vector<Index> cols;
  cols.reserve(static_cast<std::size_t>(K));
  for (std::size_t c = 0; c < quota.size(); ++c) {
    cols.insert(cols.end(), per_class[c].begin(), per_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  return Dictionary::normalized(detail::pick_columns(Y, cols));
}

inline Dictionary init_dictionary(const Eigen::MatrixXd& Y, Index K, const InitScheme& scheme) {
  return init_dictionary(Y, nullptr, K, scheme);
}

/// Best rank-1 approximation E ~ u x^T with ||u|| = 1 and x = E^T u.
struct RankOne {
  Eigen::VectorXd u;
  Eigen::VectorXd x;
  double sigma = 0.0;
};

/// Leading singular triple of E from the symmetric eigenproblem of the smaller
/// Gram matrix. The first nonzero entry of u is made positive.
inline RankOne rank_one_update(const Eigen::MatrixXd& E) {
  RankOne r;
  if (E.rows() == 0 || E.cols() == 0) return r;
  if (E.cols() <= E.rows()) {
    const Eigen::MatrixXd g = E.transpose() * E;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    const Eigen::VectorXd v = eig.eigenvectors().col(g.cols() - 1);
    r.u = E * v;
  } else {
    const Eigen::MatrixXd g = E * E.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    r.u = eig.eigenvectors().col(g.cols() - 1);
  }
  const double n = r.u.norm();
  if (!(n > 0.0)) {
    r.u = Eigen::VectorXd::Zero(E.rows());
    r.x = Eigen::VectorXd::Zero(E.cols());
    return r;
  }
  r.u /= n;
  for (Index i = 0; i < r.u.size(); ++i) {
    if (r.u[i] != 0.0) {
      if (r.u[i] < 0.0) r.u = -r.u;
      break;
    }
  }
  r.x = E.transpose() * r.u;
  r.sigma = r.x.norm();
  return r;
}

struct KsvdResult {
  Dictionary dictionary;
  std::vector<SparseCode> codes;
};

/// Sum_i w_i^2 ||y_i - D x_i||^2.
inline double weighted_representation_cost(const Eigen::MatrixXd& atoms, const Eigen::MatrixXd& Y,
                                           const std::vector<SparseCode>& X, const Eigen::VectorXd& weights) {
  double acc = 0.0;
  for (Index i = 0; i < Y.cols(); ++i) {
    acc += weights[i] * weights[i] * (Y.col(i) - apply(atoms, X[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return acc;
}

/// One K-SVD sweep with fixed supports. Samples and their codes are scaled by
/// weights[i] (= 1/sigma_i) during the sweep so the update minimizes
/// sum_i ||y_i - D x_i||^2 / sigma_i^2; codes are unscaled afterwards.
/// Atoms are visited in index order and later atoms see earlier updates.
inline KsvdResult ksvd_update(const Dictionary& D, const Eigen::MatrixXd& Y, const std::vector<SparseCode>& X,
                              const Eigen::VectorXd& weights) {
  const Index d = D.dim();
  const Index K = D.size();
  const Index N = Y.cols();
  if (Y.rows() != d) throw DimensionError("ksvd_update: data and dictionary row counts differ");
  if (static_cast<Index>(X.size()) != N || weights.size() != N) {
    throw DimensionError("ksvd_update: codes, weights and data must have one entry per sample");
  }
  for (Index i = 0; i < N; ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) throw ConfigError("ksvd_update: weights must be positive");
    if (X[static_cast<std::size_t>(i)].ambient_dim != K) throw DimensionError("ksvd_update: code dimension mismatch");
  }

  Eigen::MatrixXd atoms = D.atoms();
  std::vector<SparseCode> codes = X;
  for (Index i = 0; i < N; ++i) {
    for (double& v : codes[static_cast<std::size_t>(i)].values) v *= weights[i];
  }

  // Weighted residual R = Y W - D X W.
  Eigen::MatrixXd R(d, N);
  for (Index i = 0; i < N; ++i) R.col(i) = weights[i] * Y.col(i) - apply(atoms, codes[static_cast<std::size_t>(i)]);

  // users[k] = (sample, slot within that sample's code)
  std::vector<std::vector<std::pair<Index, std::size_t>>> users(static_cast<std::size_t>(K));
  for (Index i = 0; i < N; ++i) {
    const auto& c = codes[static_cast<std::size_t>(i)];
    for (std::size_t s = 0; s < c.nnz(); ++s) users[static_cast<std::size_t>(c.indices[s])].emplace_back(i, s);
  }

  std::vector<char> replacement_used(static_cast<std::size_t>(N), 0);
  for (Index k = 0; k < K; ++k) {
    const auto& uk = users[static_cast<std::size_t>(k)];
    if (uk.empty()) {
      // Dead atom: swap in the worst-represented sample not yet used this sweep.
      Index worst = -1;
      double worst_norm = 0.0;
      for (Index i = 0; i < N; ++i) {
        if (replacement_used[static_cast<std::size_t>(i)]) continue;
        const double r = R.col(i).squaredNorm();
        if (r > worst_norm && Y.col(i).squaredNorm() > 0.0) {
          worst_norm = r;
          worst = i;
        }
      }
      if (worst >= 0) {
        replacement_used[static_cast<std::size_t>(worst)] = 1;
        atoms.col(k) = Y.col(worst).normalized();
      }
      continue;
    }

    const Index m = static_cast<Index>(uk.size());
    Eigen::MatrixXd E(d, m);
    Eigen::VectorXd old_coeffs(m);
    for (Index c = 0; c < m; ++c) {
      const auto [i, s] = uk[static_cast<std::size_t>(c)];
      old_coeffs[c] = codes[static_cast<std::size_t>(i)].values[s];
      E.col(c) = R.col(i) + old_coeffs[c] * atoms.col(k);
    }

    RankOne r1 = rank_one_update(E);
    if (!(r1.sigma > 0.0)) continue;  // E == 0; leave the atom alone
    // Keep the current atom if rounding made the new one no better.
    const Eigen::VectorXd x_old_atom = E.transpose() * atoms.col(k);
    if (r1.x.squaredNorm() < x_old_atom.squaredNorm()) {
      r1.u = atoms.col(k);
      r1.x = x_old_atom;
    }
    atoms.col(k) = r1.u;
    for (Index c = 0; c < m; ++c) {
      const auto [i, s] = uk[static_cast<std::size_t>(c)];
      codes[static_cast<std::size_t>(i)].values[s] = r1.x[c];
      R.col(i) = E.col(c) - r1.x[c] * r1.u;
    }
  }

  for (Index i = 0; i < N; ++i) {
    SparseCode& c = codes[static_cast<std::size_t>(i)];
    SparseCode pruned(K);
    for (std::size_t s = 0; s < c.nnz(); ++s) {
      const double v = c.values[s] / weights[i];
      if (v != 0.0) {
        pruned.indices.push_back(c.indices[s]);
        pruned.values.push_back(v);
      }
    }
    c = std::move(pruned);
  }
  return {Dictionary(std::move(atoms)), std::move(codes)};
}

}  // namespace ddl

#endif  // DDL_DICTIONARY_HPP
