#ifndef DDL_DSC_HPP
#define DDL_DSC_HPP

// Discriminative sparse coding: minimizes
//
//   ||b - A x||^2 + 2 * sum_j Omega(g_j^T x + beta_j) / gamma_j   over ||x||_0 <= T
//
// by repeated Newton linearization of the classification terms. Each Newton
// step is an ordinary sparse coding problem on the stacked system
// [b; H delta] ~ [A; H G^T] x, solved with the Gram-space OMP kernel.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "ddl/errors.hpp"
#include "ddl/losses.hpp"
#include "ddl/sparse_coding.hpp"

namespace ddl {

/// Explicit form of one DSC instance. g_j = l_j w_j are the columns of
/// signed_classifiers and beta_j = l_j b_j the signed biases.
struct DscProblem {
  Eigen::MatrixXd A;                   // d x K, the dictionary scaled by 1/sigma
  Eigen::VectorXd b;                   // d, the signal scaled by 1/sigma
  Eigen::MatrixXd signed_classifiers;  // K x C
  Eigen::VectorXd bias_offsets;        // C
  Eigen::VectorXd gamma;               // C, all > 0
  LossKind loss;
  int sparsity = 1;
};

/// Newton linearization at a code x. `delta` already has the bias removed, so
/// H (delta - G^T x) is the regression residual of the classifier rows.
struct NewtonState {
  SparseCode x;
  Eigen::VectorXd margins;  // z_j = g_j^T x + beta_j
  Eigen::VectorXd delta;    // z_j - Omega12(z_j) - beta_j
  Eigen::VectorXd h_diag;   // sqrt(Omega2(z_j) / gamma_j), floored
  double objective = 0.0;
};

struct DscOptions {
  int p_max = 100;
  double stop_rel_change = 1e-4;
};

struct DscResult {
  SparseCode code;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline constexpr double kNewtonWeightFloor = 1e-12;

/// Gram-space DSC solver. The representation part enters only through
/// A^T A = scale * base_gram, A^T b and ||b||^2, so many samples that share a
/// dictionary can share one Gram matrix.
class DscSolver {
 public:
  DscSolver(std::shared_ptr<const Eigen::MatrixXd> base_gram, double gram_scale, Eigen::VectorXd atb,
            double b_squared_norm, Eigen::MatrixXd signed_classifiers, Eigen::VectorXd bias_offsets,
            Eigen::VectorXd gamma, LossKind loss, int sparsity)
      : gram_(std::move(base_gram)),
        scale_(gram_scale),
        atb_(std::move(atb)),
        b_sq_(b_squared_norm),
        g_(std::move(signed_classifiers)),
        bias_(std::move(bias_offsets)),
        gamma_(std::move(gamma)),
        loss_(loss),
        sparsity_(sparsity) {
    const Index K = gram_->cols();
    if (gram_->rows() != K || atb_.size() != K) throw DimensionError("DSC: Gram/correlation size mismatch");
    if (g_.rows() != K && g_.cols() > 0) throw DimensionError("DSC: classifier rows must equal atom count");
    if (bias_.size() != g_.cols() || gamma_.size() != g_.cols()) {
      throw DimensionError("DSC: bias and gamma must have one entry per classifier");
    }
    if (g_.cols() == 0) g_.resize(K, 0);
    for (Index j = 0; j < gamma_.size(); ++j) {
      if (!(gamma_[j] > 0.0)) throw ConfigError("DSC: gamma entries must be positive");
    }
    detail::check_budget(K, sparsity_);
  }

  static DscSolver from_problem(const DscProblem& p) {
    if (p.b.size() != p.A.rows()) throw DimensionError("DSC: signal and dictionary row counts differ");
    auto gram = std::make_shared<Eigen::MatrixXd>(AtomGram(p.A, /*precompute=*/true).matrix());
    Eigen::VectorXd atb = p.A.transpose() * p.b;
    return DscSolver(std::move(gram), 1.0, std::move(atb), p.b.squaredNorm(), p.signed_classifiers,
                     p.bias_offsets, p.gamma, p.loss, p.sparsity);
  }

  Index atoms() const { return gram_->cols(); }
  Index classifiers() const { return g_.cols(); }

  Eigen::VectorXd margins(const SparseCode& x) const {
    check_code(x);
    Eigen::VectorXd z = bias_;
    for (std::size_t s = 0; s < x.nnz(); ++s) z.noalias() += x.values[s] * g_.row(x.indices[s]).transpose();
    return z;
  }

  /// Representation term evaluated in Gram space.
  double representation(const SparseCode& x) const {
    check_code(x);
    double quad = 0.0;
    for (std::size_t s = 0; s < x.nnz(); ++s) {
      for (std::size_t t = 0; t < x.nnz(); ++t) {
        quad += x.values[s] * x.values[t] * (*gram_)(x.indices[s], x.indices[t]);
      }
    }
    return std::max(0.0, b_sq_ - 2.0 * x.dot(atb_) + scale_ * quad);
  }

  double objective(const SparseCode& x) const {
    const Eigen::VectorXd z = margins(x);
    double cls = 0.0;
    for (Index j = 0; j < z.size(); ++j) cls += loss_value(loss_, z[j]) / gamma_[j];
    return representation(x) + 2.0 * cls;
  }

  NewtonState linearize(const SparseCode& x) const {
    NewtonState st;
    st.x = x;
    st.margins = margins(x);
    const Index C = st.margins.size();
    st.delta.resize(C);
    st.h_diag.resize(C);
    double cls = 0.0;
    for (Index j = 0; j < C; ++j) {
      const double z = st.margins[j];
      st.delta[j] = z - loss_ratio12(loss_, z) - bias_[j];
      st.h_diag[j] = std::max(std::sqrt(loss_d2(loss_, z) / gamma_[j]), kNewtonWeightFloor);
      cls += loss_value(loss_, z) / gamma_[j];
    }
    st.objective = representation(x) + 2.0 * cls;
    return st;
  }

  /// One sparse coding solve of the stacked system built from `st`.
  SparseCode newton_step(const NewtonState& st) const {
    const Eigen::VectorXd h2 = st.h_diag.array().square();
    const StackedGram stacked{gram_.get(), scale_, &g_, h2};
    Eigen::VectorXd alpha0 = atb_;
    if (g_.cols() > 0) alpha0.noalias() += g_ * (h2.array() * st.delta.array()).matrix();
    const double rhs_sq = b_sq_ + (h2.array() * st.delta.array().square()).sum();
    return detail::omp_kernel(stacked, alpha0, rhs_sq, sparsity_, default_residual_tol(std::sqrt(rhs_sq)));
  }

  DscResult solve(const SparseCode& x0, const DscOptions& opts = {}) const {
    if (opts.p_max < 1) throw ConfigError("DSC: p_max must be at least 1");
    if (!(opts.stop_rel_change >= 0.0)) throw ConfigError("DSC: stop_rel_change must be non-negative");
    check_code(x0);

    DscResult best{x0, objective(x0), 0, false};
    SparseCode x = x0;
    for (int p = 1; p <= opts.p_max; ++p) {
      const NewtonState st = linearize(x);
      SparseCode next = newton_step(st);
      const double obj = objective(next);
      best.iterations = p;
      if (obj < best.objective) {
        best.code = next;
        best.objective = obj;
      }
      // The square loss is its own quadratic model: one step is exact.
      if (loss_.family == LossFamily::Square) {
        best.converged = true;
        break;
      }
      const double change = code_distance(next, x) / std::max(std::sqrt(x.squared_norm()), 1e-12);
      x = std::move(next);
      if (change <= opts.stop_rel_change) {
        best.converged = true;
        break;
      }
    }
    return best;
  }

 private:
  struct StackedGram {
    const Eigen::MatrixXd* base;
    double scale;
    const Eigen::MatrixXd* g;
    Eigen::VectorXd h2;

    Index size() const { return base->cols(); }
    double diagonal(Index k) const {
      double d = scale * (*base)(k, k);
      for (Index j = 0; j < g->cols(); ++j) d += h2[j] * (*g)(k, j) * (*g)(k, j);
      return d;
    }
    void column(Index k, Eigen::VectorXd& out) const {
      out = scale * base->col(k);
      if (g->cols() > 0) out.noalias() += (*g) * (h2.array() * g->row(k).transpose().array()).matrix();
    }
  };

  void check_code(const SparseCode& x) const {
    if (x.ambient_dim != gram_->cols()) {
      throw DimensionError("DSC: code has ambient dimension " + std::to_string(x.ambient_dim) + ", expected " +
                           std::to_string(gram_->cols()));
    }
  }

  std::shared_ptr<const Eigen::MatrixXd> gram_;
  double scale_;
  Eigen::VectorXd atb_;
  double b_sq_;
  Eigen::MatrixXd g_;
  Eigen::VectorXd bias_;
  Eigen::VectorXd gamma_;
  LossKind loss_;
  int sparsity_;
};

/// Direct (dense) evaluation of the DSC objective.
inline double dsc_objective(const DscProblem& p, const SparseCode& x) {
  if (x.ambient_dim != p.A.cols() || p.b.size() != p.A.rows()) throw DimensionError("dsc_objective: dimensions");
  if (p.signed_classifiers.cols() > 0 && p.signed_classifiers.rows() != p.A.cols()) {
    throw DimensionError("dsc_objective: classifier rows must equal atom count");
  }
  const double rep = (p.b - apply(p.A, x)).squaredNorm();
  double cls = 0.0;
  for (Index j = 0; j < p.signed_classifiers.cols(); ++j) {
    const double z = x.dot(p.signed_classifiers.col(j)) + p.bias_offsets[j];
    cls += loss_value(p.loss, z) / p.gamma[j];
  }
  return rep + 2.0 * cls;
}

inline NewtonState newton_linearize(const DscProblem& p, const SparseCode& x) {
  return DscSolver::from_problem(p).linearize(x);
}

inline DscResult dsc_solve(const DscProblem& p, const SparseCode& x0, const DscOptions& opts = {}) {
  return DscSolver::from_problem(p).solve(x0, opts);
}

}  // namespace ddl

#endif  // DDL_DSC_HPP
