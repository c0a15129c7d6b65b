#ifndef DDL_TRAINER_HPP
#define DDL_TRAINER_HPP

// Discriminative dictionary learning by block coordinate descent on the MAP
// objective
//
//   J = sum_i ||y_i - D x_i||^2 / (2 sigma_i^2) + sum_i (M + 2) ln sigma_i
//     + sum_j sum_i Omega(L_ji (w_j^T x_i + b_j)) / gamma_j + sum_j (N + 1) ln gamma_j
//
// Each outer iteration runs: per-sample discriminative sparse coding,
// classifier training, one weighted K-SVD sweep, then the closed-form
// sigma / gamma updates.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddl/classifiers.hpp"
#include "ddl/dictionary.hpp"
#include "ddl/dsc.hpp"
#include "ddl/errors.hpp"
#include "ddl/losses.hpp"
#include "ddl/parallel.hpp"
#include "ddl/sparse_coding.hpp"

namespace ddl {

struct TrainConfig {
  Index K = 100;
  int T = 3;
  LossKind loss = LossKind::square();
  int q_max = 20;
  int p_max = 100;
  double dsc_stop_rel_change = 1e-4;
  double stop_rel_change = 1e-4;
  std::optional<double> ridge;  // default 1e-6 * (labeled sample count)
  InitKind init = InitKind::FromSamples;
  std::uint64_t seed = 0;
  std::vector<char> labeled_mask;  // empty: every sample is labeled
  double sigma_floor = 1e-8;
  double gamma_floor = 1e-8;
  int threads = 1;  // does not affect results

  void validate() const {
    if (K < 1) throw ConfigError("K must be at least 1");
    if (T < 1) throw ConfigError("T must be at least 1");
    if (T > K) throw ConfigError("T must not exceed K");
    if (q_max < 0) throw ConfigError("q_max must be non-negative");
    if (p_max < 1) throw ConfigError("p_max must be at least 1");
    if (!(dsc_stop_rel_change >= 0.0) || !(stop_rel_change >= 0.0)) {
      throw ConfigError("stop criteria must be non-negative");
    }
    if (ridge && !(*ridge >= 0.0)) throw ConfigError("ridge must be non-negative");
    if (!(sigma_floor > 0.0) || !(gamma_floor > 0.0)) throw ConfigError("floors must be positive");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (loss.family == LossFamily::SmoothHinge && (!(loss.rho > 0.0) || !(loss.eps > 0.0))) {
      throw ConfigError("smooth hinge requires rho > 0 and eps > 0");
    }
  }
};

/// The four terms of the MAP objective plus the raw residual energy.
struct ObjectiveTerms {
  double residual_sq = 0.0;         // sum_i ||y_i - D x_i||^2
  double representation = 0.0;      // sum_i ||y_i - D x_i||^2 / (2 sigma_i^2)
  double representation_log = 0.0;  // sum_i (M + 2) ln sigma_i
  double classification = 0.0;      // sum_j sum_i Omega / gamma_j
  double classification_log = 0.0;  // sum_j (N + 1) ln gamma_j

  double log_prior_terms() const { return representation_log + classification_log; }
  double total() const { return representation + representation_log + classification + classification_log; }
};

struct DdlModel {
  Dictionary dictionary;
  ClassifierBank classifiers;
  std::vector<SparseCode> codes;
  Eigen::VectorXd sigma;
  Eigen::VectorXd gamma;
  TrainConfig config;
  std::vector<ObjectiveTerms> trace;  // entry q is the state after q outer iterations
  int best_iteration = 0;
  bool baseline = false;
};

namespace detail {

inline std::vector<Index> labeled_indices(Index N, const std::vector<char>& mask) {
  std::vector<Index> idx;
  for (Index i = 0; i < N; ++i) {
    if (mask.empty() || mask[static_cast<std::size_t>(i)]) idx.push_back(i);
  }
  return idx;
}

inline double residual_sq(const Eigen::MatrixXd& atoms, const Eigen::MatrixXd& Y, const SparseCode& x, Index i) {
  return (Y.col(i) - apply(atoms, x)).squaredNorm();
}

}  // namespace detail

/// sigma_i = sqrt(||y_i - D x_i||^2 / (M + 2)), floored.
inline Eigen::VectorXd update_sigma(const Eigen::MatrixXd& Y, const Dictionary& D, const std::vector<SparseCode>& X,
                                    double sigma_floor = 1e-8) {
  if (Y.rows() != D.dim() || static_cast<Index>(X.size()) != Y.cols()) {
    throw DimensionError("update_sigma: inconsistent dimensions");
  }
  const double m2 = static_cast<double>(Y.rows()) + 2.0;
  Eigen::VectorXd sigma(Y.cols());
  for (Index i = 0; i < Y.cols(); ++i) {
    sigma[i] = std::max(std::sqrt(detail::residual_sq(D.atoms(), Y, X[static_cast<std::size_t>(i)], i) / m2),
                        sigma_floor);
  }
  return sigma;
}

/// gamma_j = sum_i Omega(L_ji (w_j^T x_i + b_j)) / (N + 1) over the given
/// samples (all of them by default), floored.
inline Eigen::VectorXd update_gamma(const LabelMatrix& L, const ClassifierBank& bank, const std::vector<SparseCode>& X,
                                    const LossKind& loss, double gamma_floor = 1e-8,
                                    const std::vector<char>& labeled_mask = {}) {
  if (L.samples() != static_cast<Index>(X.size()) || L.classes() != bank.classes()) {
    throw DimensionError("update_gamma: inconsistent dimensions");
  }
  const auto idx = detail::labeled_indices(L.samples(), labeled_mask);
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(L.classes());
  for (Index i : idx) {
    const Eigen::VectorXd s = decision_values(bank, X[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < L.classes(); ++j) sums[j] += loss_value(loss, L(j, i) * s[j]);
  }
  const double n1 = static_cast<double>(idx.size()) + 1.0;
  Eigen::VectorXd gamma(L.classes());
  for (Index j = 0; j < L.classes(); ++j) gamma[j] = std::max(sums[j] / n1, gamma_floor);
  return gamma;
}

/// Evaluates the MAP objective for arbitrary parameters (floors applied).
inline ObjectiveTerms map_objective(const Eigen::MatrixXd& Y, const LabelMatrix& L, const Dictionary& D,
                                    const ClassifierBank& bank, const std::vector<SparseCode>& X,
                                    const Eigen::VectorXd& sigma, const Eigen::VectorXd& gamma,
                                    double sigma_floor = 1e-8, double gamma_floor = 1e-8,
                                    const std::vector<char>& labeled_mask = {}) {
  const Index N = Y.cols();
  if (Y.rows() != D.dim() || static_cast<Index>(X.size()) != N || sigma.size() != N || L.samples() != N ||
      gamma.size() != L.classes() || bank.classes() != L.classes()) {
    throw DimensionError("map_objective: inconsistent dimensions");
  }
  ObjectiveTerms t;
  const double m2 = static_cast<double>(Y.rows()) + 2.0;
  for (Index i = 0; i < N; ++i) {
    const double r = detail::residual_sq(D.atoms(), Y, X[static_cast<std::size_t>(i)], i);
    const double s = std::max(sigma[i], sigma_floor);
    t.residual_sq += r;
    t.representation += r / (2.0 * s * s);
    t.representation_log += m2 * std::log(s);
  }
  const auto idx = detail::labeled_indices(N, labeled_mask);
  const double n1 = static_cast<double>(idx.size()) + 1.0;
  for (Index j = 0; j < L.classes(); ++j) {
    const double g = std::max(gamma[j], gamma_floor);
    t.classification_log += n1 * std::log(g);
  }
  for (Index i : idx) {
    const Eigen::VectorXd s = decision_values(bank, X[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < L.classes(); ++j) {
      t.classification += loss_value(bank.loss, L(j, i) * s[j]) / std::max(gamma[j], gamma_floor);
    }
  }
  return t;
}

inline ObjectiveTerms map_objective(const Eigen::MatrixXd& Y, const LabelMatrix& L, const DdlModel& m) {
  return map_objective(Y, L, m.dictionary, m.classifiers, m.codes, m.sigma, m.gamma, m.config.sigma_floor,
                       m.config.gamma_floor, m.config.labeled_mask);
}

namespace detail {

struct TrainingData {
  const Eigen::MatrixXd& Y;
  const LabelMatrix& L;
  std::vector<Index> labeled;
  LabelMatrix L_labeled;
};

inline TrainingData prepare(const Eigen::MatrixXd& Y, const LabelMatrix& L, const TrainConfig& cfg) {
  cfg.validate();
  if (Y.cols() < 1) throw ConfigError("training needs at least one sample");
  if (!Y.allFinite()) throw ConfigError("training data has non-finite entries");
  if (L.samples() != Y.cols()) throw DimensionError("labels and data disagree on sample count");
  if (!cfg.labeled_mask.empty() && static_cast<Index>(cfg.labeled_mask.size()) != Y.cols()) {
    throw DimensionError("labeled mask must have one entry per sample");
  }
  TrainingData td{Y, L, labeled_indices(Y.cols(), cfg.labeled_mask), {}};
  if (td.labeled.empty()) throw ConfigError("at least one sample must be labeled");
  Eigen::MatrixXd sub(L.classes(), static_cast<Index>(td.labeled.size()));
  for (std::size_t c = 0; c < td.labeled.size(); ++c) sub.col(static_cast<Index>(c)) = L.entries().col(td.labeled[c]);
  td.L_labeled = LabelMatrix(std::move(sub));
  return td;
}

inline ClassifierBank fit_classifiers(const TrainingData& td, const std::vector<SparseCode>& X, const TrainConfig& cfg) {
  std::vector<SparseCode> sub;
  sub.reserve(td.labeled.size());
  for (Index i : td.labeled) sub.push_back(X[static_cast<std::size_t>(i)]);
  const double ridge = cfg.ridge.value_or(default_ridge(td.labeled.size()));
  return train_all(sub, td.L_labeled, cfg.loss, ridge, cfg.threads);
}

inline void refresh_parameters(const TrainingData& td, DdlModel& m) {
  m.sigma = update_sigma(td.Y, m.dictionary, m.codes, m.config.sigma_floor);
  m.gamma = update_gamma(td.L, m.classifiers, m.codes, m.config.loss, m.config.gamma_floor, m.config.labeled_mask);
}

inline void check_finite(const ObjectiveTerms& t, int iteration) {
  if (!std::isfinite(t.total())) {
    throw NumericError("objective became non-finite at iteration " + std::to_string(iteration) +
                       " (representation " + std::to_string(t.representation) + ", classification " +
                       std::to_string(t.classification) + ")");
  }
}

// Shared starting point of DDL and the baseline: D0, TSC codes, classifiers,
// closed-form parameters.
inline DdlModel initial_model(const TrainingData& td, const TrainConfig& cfg) {
  DdlModel m;
  m.config = cfg;
  const InitScheme scheme{cfg.init, cfg.seed};
  m.dictionary = init_dictionary(td.Y, &td.L, cfg.K, scheme, cfg.labeled_mask.empty() ? nullptr : &cfg.labeled_mask);
  m.codes = batch_encode(m.dictionary, td.Y, cfg.T, std::nullopt, cfg.threads);
  m.classifiers = fit_classifiers(td, m.codes, cfg);
  refresh_parameters(td, m);
  m.trace.push_back(map_objective(td.Y, td.L, m));
  check_finite(m.trace.back(), 0);
  return m;
}

inline bool relative_change_small(double prev, double cur, double tol) {
  return std::abs(cur - prev) <= tol * std::max(std::abs(prev), 1e-12);
}

// Copies everything except the trace into `best`.
inline void keep_state(const DdlModel& from, DdlModel& best, int iteration) {
  best.dictionary = from.dictionary;
  best.classifiers = from.classifiers;
  best.codes = from.codes;
  best.sigma = from.sigma;
  best.gamma = from.gamma;
  best.best_iteration = iteration;
}

}  // namespace detail

/// Joint training. The returned model is the iterate with the lowest
/// objective; its trace holds the objective after every outer iteration.
inline DdlModel train(const Eigen::MatrixXd& Y, const LabelMatrix& L, const TrainConfig& cfg) {
  const detail::TrainingData td = detail::prepare(Y, L, cfg);
  DdlModel cur = detail::initial_model(td, cfg);
  DdlModel best = cur;
  double best_obj = cur.trace.back().total();
  const Index N = Y.cols();
  const Index C = L.classes();
  const DscOptions dsc_opts{cfg.p_max, cfg.dsc_stop_rel_change};

  for (int q = 1; q <= cfg.q_max; ++q) {
    // Sparse coding against a frozen snapshot of (D, W, sigma, gamma).
    auto gram = std::make_shared<Eigen::MatrixXd>(AtomGram(cur.dictionary.atoms(), true).matrix());
    const Eigen::MatrixXd DtY = cur.dictionary.atoms().transpose() * Y;
    std::vector<SparseCode> next(static_cast<std::size_t>(N));
    std::vector<Index> unlabeled;
    for (Index i = 0; i < N; ++i) {
      if (!cfg.labeled_mask.empty() && !cfg.labeled_mask[static_cast<std::size_t>(i)]) unlabeled.push_back(i);
    }
    parallel_for(static_cast<std::size_t>(N), cfg.threads, [&](std::size_t ui) {
      const Index i = static_cast<Index>(ui);
      const bool labeled = cfg.labeled_mask.empty() || cfg.labeled_mask[ui];
      if (!labeled) return;
      const double inv_s2 = 1.0 / (cur.sigma[i] * cur.sigma[i]);
      Eigen::MatrixXd G = cur.classifiers.weights;
      Eigen::VectorXd beta = cur.classifiers.biases;
      for (Index j = 0; j < C; ++j) {
        G.col(j) *= L(j, i);
        beta[j] *= L(j, i);
      }
      const DscSolver solver(gram, inv_s2, DtY.col(i) * inv_s2, Y.col(i).squaredNorm() * inv_s2, std::move(G),
                             std::move(beta), cur.gamma, cfg.loss, cfg.T);
      next[ui] = solver.solve(cur.codes[ui], dsc_opts).code;
    });
    if (!unlabeled.empty()) {
      Eigen::MatrixXd Yu(Y.rows(), static_cast<Index>(unlabeled.size()));
      for (std::size_t c = 0; c < unlabeled.size(); ++c) Yu.col(static_cast<Index>(c)) = Y.col(unlabeled[c]);
      auto tsc = batch_encode(cur.dictionary, Yu, cfg.T, std::nullopt, cfg.threads);
      for (std::size_t c = 0; c < unlabeled.size(); ++c) next[static_cast<std::size_t>(unlabeled[c])] = std::move(tsc[c]);
    }

    cur.classifiers = detail::fit_classifiers(td, next, cfg);
    const Eigen::VectorXd weights = cur.sigma.cwiseInverse();
    KsvdResult k = ksvd_update(cur.dictionary, Y, next, weights);
    cur.dictionary = std::move(k.dictionary);
    cur.codes = std::move(k.codes);
    detail::refresh_parameters(td, cur);

    cur.trace.push_back(map_objective(Y, L, cur));
    detail::check_finite(cur.trace.back(), q);
    const double obj = cur.trace.back().total();
    if (obj < best_obj) {
      best_obj = obj;
      detail::keep_state(cur, best, q);
    }
    if (detail::relative_change_small(cur.trace[cur.trace.size() - 2].total(), obj, cfg.stop_rel_change)) break;
  }
  best.trace = std::move(cur.trace);
  return best;
}

/// Decoupled pipeline: q_max rounds of unsupervised K-SVD (TSC + unit-weight
/// sweeps); classifiers always correspond to the current codes, so the final
/// ones are trained on the final codes. Shares its initialization with train().
/// A sample keeps its previous code when fresh TSC represents it worse, which
/// makes the residual energy non-increasing across iterations.
inline DdlModel train_baseline(const Eigen::MatrixXd& Y, const LabelMatrix& L, const TrainConfig& cfg) {
  const detail::TrainingData td = detail::prepare(Y, L, cfg);
  DdlModel m = detail::initial_model(td, cfg);
  m.baseline = true;
  const Index N = Y.cols();
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(N);
  for (int q = 1; q <= cfg.q_max; ++q) {
    std::vector<SparseCode> fresh = batch_encode(m.dictionary, Y, cfg.T, std::nullopt, cfg.threads);
    for (Index i = 0; i < N; ++i) {
      auto& f = fresh[static_cast<std::size_t>(i)];
      const auto& old = m.codes[static_cast<std::size_t>(i)];
      if (detail::residual_sq(m.dictionary.atoms(), Y, old, i) < detail::residual_sq(m.dictionary.atoms(), Y, f, i)) {
        f = old;
      }
    }
    KsvdResult k = ksvd_update(m.dictionary, Y, fresh, unit);
    m.dictionary = std::move(k.dictionary);
    m.codes = std::move(k.codes);
    m.classifiers = detail::fit_classifiers(td, m.codes, cfg);
    detail::refresh_parameters(td, m);
    m.trace.push_back(map_objective(Y, L, m));
    detail::check_finite(m.trace.back(), q);
    m.best_iteration = q;
  }
  return m;
}

}  // namespace ddl

#endif  // DDL_TRAINER_HPP
