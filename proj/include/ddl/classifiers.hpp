#ifndef DDL_CLASSIFIERS_HPP
#define DDL_CLASSIFIERS_HPP

// One-vs-all linear classifiers on sparse codes. Each classifier (w_j, b_j)
// minimizes sum_i Omega(l_ji (w_j^T x_i + b_j)) + ridge ||w_j||^2 with a
// damped Newton method; the C problems are independent.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddl/errors.hpp"
#include "ddl/losses.hpp"
#include "ddl/parallel.hpp"
#include "ddl/sparse_coding.hpp"

namespace ddl {

/// C x N matrix over {-1, +1}; column i is the label vector of sample i.
class LabelMatrix {
 public:
  LabelMatrix() = default;

  explicit LabelMatrix(Eigen::MatrixXd entries, bool strict_one_hot = false) : entries_(std::move(entries)) {
    for (Index i = 0; i < entries_.cols(); ++i) {
      int positives = 0;
      for (Index j = 0; j < entries_.rows(); ++j) {
        const double v = entries_(j, i);
        if (v != 1.0 && v != -1.0) throw ConfigError("label entries must be exactly -1 or +1");
        positives += v > 0.0;
      }
      if (strict_one_hot && positives != 1) {
        throw ConfigError("label column " + std::to_string(i) + " must contain exactly one +1");
      }
    }
  }

  /// One-hot labels from class indices in [0, classes).
  static LabelMatrix from_classes(std::span<const int> labels, int classes) {
    if (classes < 1) throw ConfigError("class count must be at least 1");
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(classes, static_cast<Index>(labels.size()), -1.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= classes) {
        throw ConfigError("class index " + std::to_string(labels[i]) + " out of range");
      }
      m(labels[i], static_cast<Index>(i)) = 1.0;
    }
    return LabelMatrix(std::move(m));
  }

  Index classes() const { return entries_.rows(); }
  Index samples() const { return entries_.cols(); }
  double operator()(Index j, Index i) const { return entries_(j, i); }
  const Eigen::MatrixXd& entries() const { return entries_; }

  /// Index of the first +1 in column i, or -1 if there is none.
  int class_of(Index i) const {
    for (Index j = 0; j < classes(); ++j) {
      if (entries_(j, i) > 0.0) return static_cast<int>(j);
    }
    return -1;
  }

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  Eigen::MatrixXd entries_;
};

struct ClassifierBank {
  Eigen::MatrixXd weights;  // K x C
  Eigen::VectorXd biases;   // C
  LossKind loss;

  Index classes() const { return weights.cols(); }
  Index atoms() const { return weights.rows(); }
};

/// Unsigned scores s_j = w_j^T x + b_j.
inline Eigen::VectorXd decision_values(const ClassifierBank& bank, const SparseCode& x) {
  if (x.ambient_dim != bank.weights.rows()) {
    throw DimensionError("decision_values: code dimension " + std::to_string(x.ambient_dim) +
                         " does not match classifier dimension " + std::to_string(bank.weights.rows()));
  }
  Eigen::VectorXd s = bank.biases;
  for (std::size_t t = 0; t < x.nnz(); ++t) s.noalias() += x.values[t] * bank.weights.row(x.indices[t]).transpose();
  return s;
}

enum class FitStatus { Converged, MaxIterations, Unbounded };

struct ClassifierFit {
  Eigen::VectorXd w;
  double b = 0.0;
  FitStatus status = FitStatus::MaxIterations;
  int iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;
  std::vector<double> objective_trace;  // after each accepted step, starting at the initial point
};

struct ClassifierOptions {
  int max_iterations = 200;
  int max_halvings = 30;
  double gradient_tol_per_sample = 1e-8;
};

namespace detail {

inline double empirical_loss(const LossKind& loss, std::span<const SparseCode> codes, std::span<const double> labels,
                             const Eigen::VectorXd& w, double b, double ridge) {
  double f = ridge * w.squaredNorm();
  for (std::size_t i = 0; i < codes.size(); ++i) f += loss_value(loss, labels[i] * (codes[i].dot(w) + b));
  return f;
}

inline void check_codes(std::span<const SparseCode> codes, Index K) {
  for (const auto& c : codes) {
    if (c.ambient_dim != K) throw DimensionError("classifier training: codes have inconsistent dimensions");
  }
}

}  // namespace detail

/// Trains one classifier on codes with +-1 labels. Starts at w = 0, b = 0.
inline ClassifierFit train_classifier(std::span<const SparseCode> codes, std::span<const double> labels,
                                      const LossKind& loss, double ridge, const ClassifierOptions& opts = {}) {
  if (codes.empty()) throw ConfigError("classifier training needs at least one sample");
  if (codes.size() != labels.size()) throw DimensionError("classifier training: codes and labels differ in count");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be non-negative");
  const Index K = codes.front().ambient_dim;
  detail::check_codes(codes, K);
  for (double l : labels) {
    if (l != 1.0 && l != -1.0) throw ConfigError("labels must be -1 or +1");
  }

  const double n = static_cast<double>(codes.size());
  const Index P = K + 1;  // weights then bias
  ClassifierFit fit;
  fit.w = Eigen::VectorXd::Zero(K);
  fit.b = 0.0;
  fit.objective = detail::empirical_loss(loss, codes, labels, fit.w, fit.b, ridge);
  fit.objective_trace.push_back(fit.objective);

  Eigen::VectorXd grad(P);
  Eigen::MatrixXd hess(P, P);
  for (int it = 0;; ++it) {
    grad.setZero();
    hess.setZero();
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const SparseCode& x = codes[i];
      const double l = labels[i];
      const double z = l * (x.dot(fit.w) + fit.b);
      const double g1 = loss_d1(loss, z) * l;
      const double g2 = loss_d2(loss, z);  // l^2 = 1
      for (std::size_t s = 0; s < x.nnz(); ++s) {
        const Index a = x.indices[s];
        grad[a] += g1 * x.values[s];
        for (std::size_t t = 0; t < x.nnz(); ++t) hess(a, x.indices[t]) += g2 * x.values[s] * x.values[t];
        hess(a, K) += g2 * x.values[s];
        hess(K, a) += g2 * x.values[s];
      }
      grad[K] += g1;
      hess(K, K) += g2;
    }
    grad.head(K) += 2.0 * ridge * fit.w;
    hess.topLeftCorner(K, K).diagonal().array() += 2.0 * ridge;

    fit.gradient_norm = grad.norm();
    fit.iterations = it;
    if (fit.gradient_norm <= opts.gradient_tol_per_sample * n) {
      fit.status = FitStatus::Converged;
      break;
    }
    if (it >= opts.max_iterations) {
      fit.status = FitStatus::MaxIterations;
      break;
    }

    Eigen::VectorXd step;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    const double scale = std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        ldlt.vectorD().minCoeff() > 1e-12 * scale) {
      step = ldlt.solve(-grad);
    } else {
      // Singular curvature (e.g. unused atoms with no ridge): minimum-norm step.
      step = hess.completeOrthogonalDecomposition().solve(-grad);
    }

    const double slope = grad.dot(step);
    if (!(slope < 0.0)) {
      fit.status = FitStatus::Converged;  // no descent direction left at working precision
      break;
    }
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      const Eigen::VectorXd w_new = fit.w + t * step.head(K);
      const double b_new = fit.b + t * step[K];
      const double f_new = detail::empirical_loss(loss, codes, labels, w_new, b_new, ridge);
      if (f_new <= fit.objective + 1e-4 * t * slope) {
        fit.w = w_new;
        fit.b = b_new;
        fit.objective = f_new;
        fit.objective_trace.push_back(f_new);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      fit.status = fit.gradient_norm <= 1e-6 * n ? FitStatus::Converged : FitStatus::MaxIterations;
      break;
    }
  }

  // Exponential and logistic costs are positive everywhere and vanish only as
  // margins grow: with no ridge, zero training error certifies that no
  // minimizer exists (scaling (w, b) up always lowers the loss).
  if (ridge == 0.0 && (loss.family == LossFamily::Exponential || loss.family == LossFamily::Logistic)) {
    bool all_positive = true;
    for (std::size_t i = 0; i < codes.size() && all_positive; ++i) {
      all_positive = labels[i] * (codes[i].dot(fit.w) + fit.b) > 0.0;
    }
    bool one_sided = true;
    for (double l : labels) one_sided = one_sided && l == labels.front();
    if (all_positive || one_sided) fit.status = FitStatus::Unbounded;
  }
  return fit;
}

inline double default_ridge(std::size_t samples) { return 1e-6 * static_cast<double>(samples); }

/// Trains all C classifiers, one per row of L. Column j of the result depends
/// only on row j. Throws NumericError if any class has no bounded minimizer.
inline ClassifierBank train_all(std::span<const SparseCode> codes, const LabelMatrix& L, const LossKind& loss,
                                double ridge, int threads = 1, const ClassifierOptions& opts = {}) {
  if (codes.empty()) throw ConfigError("classifier training needs at least one sample");
  if (static_cast<Index>(codes.size()) != L.samples()) {
    throw DimensionError("train_all: " + std::to_string(codes.size()) + " codes but " +
                         std::to_string(L.samples()) + " label columns");
  }
  const Index K = codes.front().ambient_dim;
  const Index C = L.classes();
  ClassifierBank bank{Eigen::MatrixXd::Zero(K, C), Eigen::VectorXd::Zero(C), loss};
  std::vector<FitStatus> status(static_cast<std::size_t>(C));
  parallel_for(static_cast<std::size_t>(C), threads, [&](std::size_t j) {
    std::vector<double> row(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) row[i] = L(static_cast<Index>(j), static_cast<Index>(i));
    ClassifierFit fit = train_classifier(codes, row, loss, ridge, opts);
    bank.weights.col(static_cast<Index>(j)) = fit.w;
    bank.biases[static_cast<Index>(j)] = fit.b;
    status[j] = fit.status;
  });
  for (std::size_t j = 0; j < status.size(); ++j) {
    if (status[j] == FitStatus::Unbounded) {
      throw NumericError("classifier " + std::to_string(j) +
                         " has no bounded minimizer (separable data with zero ridge)");
    }
  }
  return bank;
}

}  // namespace ddl

#endif  // DDL_CLASSIFIERS_HPP
