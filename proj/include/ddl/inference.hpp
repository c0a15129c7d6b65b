#ifndef DDL_INFERENCE_HPP
#define DDL_INFERENCE_HPP

// Label prediction for a trained model.
//
// FastTsc encodes the sample once and scores every class hypothesis by its
// total classification cost. FullDsc solves one discriminative coding problem
// per hypothesis and compares joint costs. Robust mode encodes over [D | I] so
// that a few identity atoms can absorb sparse gross errors; their
// coefficients never reach the classifiers.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ddl/classifiers.hpp"
#include "ddl/dsc.hpp"
#include "ddl/errors.hpp"
#include "ddl/parallel.hpp"
#include "ddl/sparse_coding.hpp"
#include "ddl/trainer.hpp"

namespace ddl {

enum class PredictMode { FastTsc, FullDsc };

inline const char* mode_name(PredictMode m) { return m == PredictMode::FastTsc ? "fast" : "full"; }

inline PredictMode parse_mode(const std::string& s) {
  if (s == "fast") return PredictMode::FastTsc;
  if (s == "full") return PredictMode::FullDsc;
  throw ConfigError("mode must be 'fast' or 'full', got '" + s + "'");
}

struct PredictOptions {
  PredictMode mode = PredictMode::FastTsc;
  bool robust = false;
  int T_test = 0;  // 0: the model's training budget
  int e_budget = 0;
  std::size_t max_augmented_bytes = std::size_t{512} << 20;
  DscOptions dsc{};

  void validate() const {
    if (T_test < 0) throw ConfigError("T_test must be at least 1 (or 0 for the model default)");
    if (e_budget < 0) throw ConfigError("e_budget must be non-negative");
    if (!robust && e_budget > 0) throw ConfigError("e_budget requires robust mode");
  }
};

struct Prediction {
  int label = 0;
  Eigen::VectorXd scores;  // C, higher is better
  SparseCode code;         // K-dimensional; error atoms removed
  SparseCode error;        // d-dimensional identity coefficients (robust mode)
  double residual = 0.0;   // ||y - D x - e||
};

/// Index of the largest score; ties resolve to the lowest index.
inline int argmax_lowest(const Eigen::VectorXd& s) {
  int best = 0;
  for (Index j = 1; j < s.size(); ++j) {
    if (s[j] > s[best]) best = static_cast<int>(j);
  }
  return best;
}

/// score(j) = -sum_j' Omega(l(j)_j' * s_j') / gamma_j' with l(j) one-hot at j.
inline Eigen::VectorXd hypothesis_scores(const ClassifierBank& bank, const Eigen::VectorXd& gamma,
                                         const SparseCode& x) {
  const Eigen::VectorXd s = decision_values(bank, x);
  const Index C = s.size();
  // Every hypothesis shares the all-negative cost; only the positive slot differs.
  Eigen::VectorXd neg(C), pos(C);
  double total_neg = 0.0;
  for (Index j = 0; j < C; ++j) {
    neg[j] = loss_value(bank.loss, -s[j]) / gamma[j];
    pos[j] = loss_value(bank.loss, s[j]) / gamma[j];
    total_neg += neg[j];
  }
  Eigen::VectorXd score(C);
  for (Index j = 0; j < C; ++j) score[j] = -(total_neg - neg[j] + pos[j]);
  return score;
}

namespace detail {

// Gram operator of [D | I] built from the same columns as AtomGram(D), so
// that the D block is bit-identical to the non-augmented Gram.
class AugmentedGram {
 public:
  AugmentedGram(const Eigen::MatrixXd& atoms, const AtomGram& base) : atoms_(&atoms), base_(&base) {}

  Index size() const { return atoms_->cols() + atoms_->rows(); }
  double diagonal(Index k) const { return k < atoms_->cols() ? base_->diagonal(k) : 1.0; }
  void column(Index k, Eigen::VectorXd& out) const {
    const Index K = atoms_->cols();
    const Index d = atoms_->rows();
    out.resize(K + d);
    if (k < K) {
      Eigen::VectorXd head;
      base_->column(k, head);
      out.head(K) = head;
      out.tail(d) = atoms_->col(k);
    } else {
      out.head(K) = atoms_->row(k - K).transpose();
      out.tail(d).setZero();
      out[k] = 1.0;
    }
  }

 private:
  const Eigen::MatrixXd* atoms_;
  const AtomGram* base_;
};

}  // namespace detail

/// Prediction engine over an immutable model. Safe to call concurrently.
class Predictor {
 public:
  Predictor(const DdlModel& model, PredictOptions opts) : model_(&model), opts_(opts) {
    opts_.validate();
    const Index K = model.dictionary.size();
    const Index d = model.dictionary.dim();
    const Index C = model.classifiers.classes();
    if (model.classifiers.weights.rows() != K || model.gamma.size() != C || C < 1) {
      throw DimensionError("predictor: model components have inconsistent sizes");
    }
    T_ = opts_.T_test > 0 ? opts_.T_test : model.config.T;
    detail::check_budget(K, T_);
    if (opts_.robust) {
      // FullDsc keeps a dense (K+d)^2 Gram; FastTsc only per-call work vectors.
      const double n = static_cast<double>(K + d);
      const double bytes = opts_.mode == PredictMode::FullDsc
                               ? 8.0 * n * n
                               : 8.0 * (static_cast<double>(K) * static_cast<double>(K) + n * (T_ + opts_.e_budget + 4));
      if (bytes > static_cast<double>(opts_.max_augmented_bytes)) {
        throw ConfigError("robust mode needs about " + std::to_string(static_cast<long long>(bytes / 1048576.0)) +
                          " MiB for the identity-augmented dictionary, above the " +
                          std::to_string(opts_.max_augmented_bytes >> 20) + " MiB budget");
      }
      detail::check_budget(K + d, T_ + opts_.e_budget);
    }
    base_ = std::make_unique<AtomGram>(model.dictionary.atoms(), /*precompute=*/true);
    if (opts_.mode == PredictMode::FullDsc) {
      if (opts_.robust) {
        const detail::AugmentedGram aug(model.dictionary.atoms(), *base_);
        auto g = std::make_shared<Eigen::MatrixXd>(K + d, K + d);
        Eigen::VectorXd col;
        for (Index k = 0; k < K + d; ++k) {
          aug.column(k, col);
          g->col(k) = col;
        }
        dsc_gram_ = std::move(g);
      } else {
        dsc_gram_ = std::make_shared<Eigen::MatrixXd>(base_->matrix());
      }
    }
  }

  const PredictOptions& options() const { return opts_; }
  int sparsity() const { return T_; }

  Prediction predict(const Eigen::VectorXd& y) const {
    const Eigen::MatrixXd& D = model_->dictionary.atoms();
    const Index K = D.cols();
    const Index d = D.rows();
    if (y.size() != d) {
      throw DimensionError("sample has dimension " + std::to_string(y.size()) + ", model expects " +
                           std::to_string(d));
    }
    if (!y.allFinite()) throw ConfigError("sample has non-finite entries");

    const double y_sq = y.squaredNorm();
    const double tol = default_residual_tol(std::sqrt(y_sq));
    Prediction p;
    SparseCode full;  // over the coded atom set (K or K + d)
    if (opts_.robust) {
      const detail::AugmentedGram aug(D, *base_);
      Eigen::VectorXd alpha0(K + d);
      alpha0.head(K) = base_->correlations(y);
      alpha0.tail(d) = y;
      full = detail::omp_kernel(aug, alpha0, y_sq, T_ + opts_.e_budget, tol);
    } else {
      full = detail::omp_kernel(*base_, base_->correlations(y), y_sq, T_, tol);
    }
    split_code(full, K, d, p.code, p.error);

    if (opts_.mode == PredictMode::FastTsc) {
      p.scores = hypothesis_scores(model_->classifiers, model_->gamma, p.code);
    } else {
      p.scores = full_scores(y, y_sq, full, p.code, p.error);
    }
    p.label = argmax_lowest(p.scores);
    Eigen::VectorXd r = y - apply(D, p.code);
    for (std::size_t s = 0; s < p.error.nnz(); ++s) r[p.error.indices[s]] -= p.error.values[s];
    p.residual = r.norm();
    return p;
  }

 private:
  static void split_code(const SparseCode& full, Index K, Index d, SparseCode& code, SparseCode& error) {
    code = SparseCode(K);
    error = SparseCode(d);
    for (std::size_t s = 0; s < full.nnz(); ++s) {
      if (full.indices[s] < K) {
        code.indices.push_back(full.indices[s]);
        code.values.push_back(full.values[s]);
      } else {
        error.indices.push_back(full.indices[s] - K);
        error.values.push_back(full.values[s]);
      }
    }
  }

  // Joint log-probability per hypothesis with unit test sigma:
  // -(||y - A x||^2 / 2 + sum_j Omega / gamma_j) = -dsc_objective / 2. The
  // winning code for a hypothesis replaces p.code only for the chosen label.
  Eigen::VectorXd full_scores(const Eigen::VectorXd& y, double y_sq, const SparseCode& start, SparseCode& code,
                              SparseCode& error) const {
    const Eigen::MatrixXd& D = model_->dictionary.atoms();
    const Index K = D.cols();
    const Index d = D.rows();
    const Index n = dsc_gram_->cols();
    const Index C = model_->classifiers.classes();
    Eigen::VectorXd atb(n);
    atb.head(K) = base_->correlations(y);
    if (n > K) atb.tail(d) = y;
    Eigen::VectorXd scores(C);
    std::vector<SparseCode> codes(static_cast<std::size_t>(C));
    for (Index h = 0; h < C; ++h) {
      Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, C);
      Eigen::VectorXd beta(C);
      for (Index j = 0; j < C; ++j) {
        const double l = j == h ? 1.0 : -1.0;
        G.col(j).head(K) = l * model_->classifiers.weights.col(j);
        beta[j] = l * model_->classifiers.biases[j];
      }
      const DscSolver solver(dsc_gram_, 1.0, atb, y_sq, std::move(G), std::move(beta), model_->gamma,
                             model_->classifiers.loss, T_ + (opts_.robust ? opts_.e_budget : 0));
      const DscResult res = solver.solve(start, opts_.dsc);
      scores[h] = -0.5 * res.objective;
      codes[static_cast<std::size_t>(h)] = res.code;
    }
    split_code(codes[static_cast<std::size_t>(argmax_lowest(scores))], K, d, code, error);
    return scores;
  }

  const DdlModel* model_;
  PredictOptions opts_;
  int T_ = 1;
  std::unique_ptr<AtomGram> base_;
  std::shared_ptr<const Eigen::MatrixXd> dsc_gram_;
};

inline Prediction predict(const DdlModel& model, const Eigen::VectorXd& y, const PredictOptions& opts = {}) {
  return Predictor(model, opts).predict(y);
}

struct Metrics {
  double error_rate = 0.0;
  Eigen::VectorXd per_class_error;  // NaN for classes absent from the test set
  Eigen::MatrixXi confusion;        // rows: true class, columns: predicted class
  double mean_residual = 0.0;
  double runtime_ms = 0.0;
  std::vector<int> predictions;
};

inline Metrics metrics_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted, int classes) {
  if (truth.empty()) throw ConfigError("evaluation needs at least one test sample");
  if (truth.size() != predicted.size()) throw DimensionError("prediction and label counts differ");
  Metrics m;
  m.confusion = Eigen::MatrixXi::Zero(classes, classes);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw ConfigError("class index out of range in evaluation");
    }
    ++m.confusion(truth[i], predicted[i]);
    wrong += truth[i] != predicted[i];
  }
  m.error_rate = static_cast<double>(wrong) / static_cast<double>(truth.size());
  m.per_class_error.resize(classes);
  for (int c = 0; c < classes; ++c) {
    const int total = m.confusion.row(c).sum();
    m.per_class_error[c] = total == 0 ? std::numeric_limits<double>::quiet_NaN()
                                      : 1.0 - static_cast<double>(m.confusion(c, c)) / total;
  }
  m.predictions = predicted;
  return m;
}

/// Predicts every column of Y_test (in parallel; results do not depend on
/// the thread count) and summarizes against the true class indices.
inline Metrics evaluate(const DdlModel& model, const Eigen::MatrixXd& Y_test, const std::vector<int>& labels,
                        const PredictOptions& opts = {}, int threads = 1) {
  if (Y_test.cols() == 0) throw ConfigError("evaluation needs at least one test sample");
  if (static_cast<Index>(labels.size()) != Y_test.cols()) throw DimensionError("test labels and samples differ in count");
  if (Y_test.rows() != model.dictionary.dim()) {
    throw DimensionError("test samples have dimension " + std::to_string(Y_test.rows()) + ", model expects " +
                         std::to_string(model.dictionary.dim()));
  }
  const auto start = std::chrono::steady_clock::now();
  const Predictor predictor(model, opts);
  std::vector<int> predicted(labels.size());
  std::vector<double> residual(labels.size());
  parallel_for(labels.size(), threads, [&](std::size_t i) {
    const Prediction p = predictor.predict(Y_test.col(static_cast<Index>(i)));
    predicted[i] = p.label;
    residual[i] = p.residual;
  });
  Metrics m = metrics_from_predictions(labels, predicted, static_cast<int>(model.classifiers.classes()));
  double sum = 0.0;
  for (double r : residual) sum += r;
  m.mean_residual = sum / static_cast<double>(residual.size());
  m.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return m;
}

inline Metrics evaluate(const DdlModel& model, const Eigen::MatrixXd& Y_test, const LabelMatrix& L_test,
                        const PredictOptions& opts = {}, int threads = 1) {
  std::vector<int> labels(static_cast<std::size_t>(L_test.samples()));
  for (Index i = 0; i < L_test.samples(); ++i) {
    labels[static_cast<std::size_t>(i)] = L_test.class_of(i);
    if (labels[static_cast<std::size_t>(i)] < 0) throw ConfigError("test label column without a positive entry");
  }
  return evaluate(model, Y_test, labels, opts, threads);
}

inline void write_metrics_header(std::ostream& out, Index classes) {
  out << "dataset,mode,robust,K,T,loss,error_rate";
  for (Index c = 0; c < classes; ++c) out << ",per_class_error_" << c;
  out << ",runtime_ms\n";
}

inline void write_metrics_row(std::ostream& out, const std::string& dataset, const PredictOptions& opts,
                              const DdlModel& model, const Metrics& m) {
  char buf[40];
  auto num = [&](double v) -> const char* {
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
  };
  const int T = opts.T_test > 0 ? opts.T_test : model.config.T;
  out << dataset << ',' << mode_name(opts.mode) << ',' << (opts.robust ? 1 : 0) << ',' << model.dictionary.size()
      << ',' << T << ',' << loss_name(model.classifiers.loss) << ',';
  out << num(m.error_rate);
  for (Index c = 0; c < m.per_class_error.size(); ++c) out << ',' << num(m.per_class_error[c]);
  out << ',' << num(m.runtime_ms) << '\n';
}

}  // namespace ddl

#endif  // DDL_INFERENCE_HPP
