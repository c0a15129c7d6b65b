#ifndef DDL_TEST_UTIL_HPP
#define DDL_TEST_UTIL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "ddl/sparse_coding.hpp"

namespace ddl::testing {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Eigen::MatrixXd unit_columns(Eigen::MatrixXd m) {
  for (Eigen::Index k = 0; k < m.cols(); ++k) m.col(k).normalize();
  return m;
}

/// T distinct indices in [0, K), sorted, with coefficients of magnitude in [lo, hi].
inline SparseCode planted_code(Eigen::Index K, int T, std::mt19937_64& rng, double lo = 0.5, double hi = 1.5) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) all[static_cast<std::size_t>(k)] = k;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(T));
  std::sort(all.begin(), all.end());
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  SparseCode c(K);
  for (auto k : all) {
    c.indices.push_back(k);
    c.values.push_back(sign(rng) ? mag(rng) : -mag(rng));
  }
  return c;
}

/// Calls fn on every subset of {0..K-1} with exactly `size` elements.
inline void for_each_subset(Eigen::Index K, int size, const std::function<void(const std::vector<Eigen::Index>&)>& fn) {
  std::vector<Eigen::Index> s(static_cast<std::size_t>(size));
  std::function<void(int, Eigen::Index)> rec = [&](int pos, Eigen::Index start) {
    if (pos == size) {
      fn(s);
      return;
    }
    for (Eigen::Index k = start; k < K; ++k) {
      s[static_cast<std::size_t>(pos)] = k;
      rec(pos + 1, k + 1);
    }
  };
  rec(0, 0);
}

/// Least-squares fit of b on the given columns of A; returns the dense K-vector.
inline Eigen::VectorXd ls_on_support(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                     const std::vector<Eigen::Index>& support) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(A.cols());
  if (support.empty()) return x;
  Eigen::MatrixXd sub(A.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) sub.col(static_cast<Eigen::Index>(s)) = A.col(support[s]);
  const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(b);
  for (std::size_t s = 0; s < support.size(); ++s) x[support[s]] = coef[static_cast<Eigen::Index>(s)];
  return x;
}

}  // namespace ddl::testing

#endif
