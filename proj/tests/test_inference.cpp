#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ddl/inference.hpp"
#include "test_util.hpp"

using namespace ddl;
using ddl::testing::gaussian;
using ddl::testing::planted_code;
using ddl::testing::unit_columns;

namespace {

DdlModel make_model(Eigen::MatrixXd atoms, Eigen::MatrixXd W, Eigen::VectorXd b, Eigen::VectorXd gamma, LossKind loss,
                    int T) {
  DdlModel m;
  m.dictionary = Dictionary(std::move(atoms));
  m.classifiers = ClassifierBank{std::move(W), std::move(b), loss};
  m.gamma = std::move(gamma);
  m.config.K = m.dictionary.size();
  m.config.T = T;
  m.config.loss = loss;
  return m;
}

// d=6, K=C=4: atom k is the prototype of class k.
DdlModel prototype_model(LossKind loss = LossKind::logistic()) {
  std::mt19937_64 rng(80);
  const Eigen::MatrixXd Q = gaussian(6, 6, rng).householderQr().householderQ();
  return make_model(Q.leftCols(4), 10.0 * Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4),
                    Eigen::VectorXd::Ones(4), loss, 1);
}

DdlModel random_model(std::mt19937_64& rng, Index d, Index K, Index C, int T, LossKind loss) {
  std::uniform_real_distribution<double> g(0.5, 2.0);
  Eigen::VectorXd gamma(C);
  for (Index j = 0; j < C; ++j) gamma[j] = g(rng);
  return make_model(unit_columns(gaussian(d, K, rng)), gaussian(K, C, rng), 0.3 * gaussian(C, 1, rng), gamma, loss,
                    T);
}

PredictOptions opts_for(PredictMode mode, bool robust = false, int e = 0) {
  PredictOptions o;
  o.mode = mode;
  o.robust = robust;
  o.e_budget = e;
  return o;
}

}  // namespace

TEST(Predict, PrototypeModelBothModes) {
  for (const LossKind& loss : {LossKind::square(), LossKind::logistic(), LossKind::exponential()}) {
    const DdlModel m = prototype_model(loss);
    const Eigen::VectorXd y = m.dictionary.atoms().col(2);
    for (PredictMode mode : {PredictMode::FastTsc, PredictMode::FullDsc}) {
      const Prediction p = predict(m, y, opts_for(mode));
      EXPECT_EQ(p.label, 2) << loss_name(loss) << " " << mode_name(mode);
      EXPECT_EQ(p.scores.size(), 4);
      if (mode == PredictMode::FastTsc) {
        EXPECT_NEAR(p.residual, 0.0, 1e-12);
      }
    }
  }
}

TEST(Predict, TiesGoToClassZero) {
  DdlModel m = prototype_model();
  m.classifiers.weights.setZero();
  m.classifiers.biases.setConstant(0.2);
  const Eigen::VectorXd y = m.dictionary.atoms().col(3);
  EXPECT_EQ(predict(m, y, opts_for(PredictMode::FastTsc)).label, 0);
  EXPECT_EQ(predict(m, y, opts_for(PredictMode::FullDsc)).label, 0);
  Eigen::VectorXd s(4);
  s << 1, 3, 3, 2;
  EXPECT_EQ(argmax_lowest(s), 1);
  EXPECT_EQ(argmax_lowest((s.array() + 17.5).matrix()), 1);
  EXPECT_EQ(argmax_lowest((s.array() - 1e6).matrix()), 1);
}

TEST(HypothesisScores, MatchDirectEvaluation) {
  std::mt19937_64 rng(81);
  for (const LossKind& loss : {LossKind::square(), LossKind::exponential(), LossKind::logistic(),
                               LossKind::smooth_hinge()}) {
    for (int trial = 0; trial < 10; ++trial) {
      const DdlModel m = random_model(rng, 8, 10, 4, 3, loss);
      const SparseCode x = planted_code(10, 3, rng);
      const Eigen::VectorXd got = hypothesis_scores(m.classifiers, m.gamma, x);
      const Eigen::VectorXd s = m.classifiers.weights.transpose() * x.to_dense() + m.classifiers.biases;
      for (Index j = 0; j < 4; ++j) {
        double direct = 0.0;
        for (Index k = 0; k < 4; ++k) direct += loss_value(loss, (k == j ? 1.0 : -1.0) * s[k]) / m.gamma[k];
        EXPECT_NEAR(got[j], -direct, 1e-12 * std::max(1.0, std::abs(direct))) << loss_name(loss);
      }
    }
  }
}

TEST(Predict, FastPathIsClassificationOfTheTscCode) {
  std::mt19937_64 rng(82);
  const DdlModel m = random_model(rng, 8, 10, 3, 2, LossKind::logistic());
  const Eigen::VectorXd y = gaussian(8, 1, rng);
  const Prediction p = predict(m, y);
  EXPECT_EQ(p.code, omp_encode(m.dictionary, y, 2));
  EXPECT_TRUE(p.error.empty());
  EXPECT_NEAR(p.residual, std::sqrt(reconstruction_error(m.dictionary, p.code, y)), 1e-12);
}

TEST(Predict, RobustWithoutErrorAtomsEqualsPlain) {
  // Greedy selection over [D | I] that never picks an identity column walks
  // the same path as over D alone. (The full path iterates Newton steps whose
  // intermediate codes may use error atoms, so only the fast path is compared.)
  std::mt19937_64 rng(83);
  int compared = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const DdlModel m = random_model(rng, 12, 20, 3, 3, LossKind::logistic());
    const Eigen::VectorXd y = apply(m.dictionary.atoms(), planted_code(20, 3, rng));
    const Prediction r = predict(m, y, opts_for(PredictMode::FastTsc, true, 0));
    if (!r.error.empty()) continue;
    const Prediction p = predict(m, y, opts_for(PredictMode::FastTsc));
    ++compared;
    EXPECT_EQ(r.label, p.label);
    EXPECT_EQ(r.code, p.code);
    EXPECT_EQ(r.scores, p.scores);
  }
  EXPECT_GE(compared, 10);
}

TEST(Predict, RobustModeAbsorbsASpike) {
  // Hadamard prototypes: every atom has all entries +-1/4, so no identity
  // column is coherent with an atom.
  Eigen::MatrixXd H = Eigen::MatrixXd::Ones(1, 1);
  while (H.rows() < 16) {
    Eigen::MatrixXd next(2 * H.rows(), 2 * H.cols());
    next << H, H, H, -H;
    H = next;
  }
  const DdlModel m = make_model(H.leftCols(4) / 4.0, 10.0 * Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4),
                                Eigen::VectorXd::Ones(4), LossKind::logistic(), 1);
  Eigen::VectorXd y = m.dictionary.atoms().col(1);
  y[4] += 5.0;
  const Prediction r = predict(m, y, opts_for(PredictMode::FastTsc, true, 1));
  EXPECT_EQ(r.label, 1);
  ASSERT_EQ(r.error.nnz(), 1u);
  EXPECT_EQ(r.error.indices[0], 4);
  EXPECT_NEAR(r.residual, 0.0, 1e-10);
  ASSERT_EQ(r.code.nnz(), 1u);
  EXPECT_EQ(r.code.indices[0], 1);
  EXPECT_EQ(predict(m, y, opts_for(PredictMode::FullDsc, true, 1)).label, 1);
}

TEST(Predict, FullDscSingleClassIsOneSolve) {
  std::mt19937_64 rng(84);
  const DdlModel m = random_model(rng, 8, 10, 1, 2, LossKind::exponential());
  const Eigen::VectorXd y = gaussian(8, 1, rng);
  const Prediction p = predict(m, y, opts_for(PredictMode::FullDsc));
  DscProblem prob;
  prob.A = m.dictionary.atoms();
  prob.b = y;
  prob.signed_classifiers = m.classifiers.weights;
  prob.bias_offsets = m.classifiers.biases;
  prob.gamma = m.gamma;
  prob.loss = m.classifiers.loss;
  prob.sparsity = 2;
  const DscResult r = dsc_solve(prob, omp_encode(m.dictionary, y, 2));
  EXPECT_EQ(p.label, 0);
  EXPECT_NEAR(p.scores[0], -0.5 * r.objective, 1e-10 * std::max(1.0, r.objective));
  EXPECT_EQ(p.code.indices, r.code.indices);
}

TEST(Predict, FastPathAgainstExhaustiveJointOracle) {
  // Square loss: each hypothesis' best joint cost is an exact least-squares
  // problem per support, so the oracle is exhaustive over all supports.
  std::mt19937_64 rng(85);
  int agree_fast = 0, agree_full = 0;
  const int trials = 60;
  for (int trial = 0; trial < trials; ++trial) {
    const DdlModel m = random_model(rng, 5, 6, 3, 2, LossKind::square());
    const Eigen::VectorXd y = gaussian(5, 1, rng);
    Eigen::VectorXd oracle(3);
    for (Index h = 0; h < 3; ++h) {
      Eigen::MatrixXd M(5 + 3, 6);
      Eigen::VectorXd r(5 + 3);
      M.topRows(5) = m.dictionary.atoms();
      r.head(5) = y;
      for (Index j = 0; j < 3; ++j) {
        const double l = j == h ? 1.0 : -1.0;
        const double w = std::sqrt(2.0 / m.gamma[j]);
        M.row(5 + j) = w * l * m.classifiers.weights.col(j).transpose();
        r[5 + j] = w * (1.0 - l * m.classifiers.biases[j]);
      }
      double best = r.squaredNorm();
      for (int s = 1; s <= 2; ++s) {
        ddl::testing::for_each_subset(6, s, [&](const std::vector<Index>& sup) {
          best = std::min(best, (r - M * ddl::testing::ls_on_support(M, r, sup)).squaredNorm());
        });
      }
      oracle[h] = -0.5 * best;
    }
    const Prediction full = predict(m, y, opts_for(PredictMode::FullDsc));
    for (Index h = 0; h < 3; ++h) EXPECT_LE(full.scores[h], oracle[h] + 1e-9);
    agree_full += full.label == argmax_lowest(oracle);
    agree_fast += predict(m, y).label == argmax_lowest(oracle);
  }
  RecordProperty("fast_agreement", agree_fast);
  RecordProperty("full_agreement", agree_full);
  std::printf("K=6 C=3 T=2 joint oracle agreement: fast %d/%d, full %d/%d\n", agree_fast, trials, agree_full, trials);
}

TEST(Predictor, ValidationAndMemoryBudget) {
  const DdlModel m = prototype_model();
  PredictOptions o = opts_for(PredictMode::FullDsc, true, 1);
  o.max_augmented_bytes = 256;
  EXPECT_THROW(Predictor(m, o), ConfigError);
  o.mode = PredictMode::FastTsc;
  o.max_augmented_bytes = 64;
  EXPECT_THROW(Predictor(m, o), ConfigError);
  EXPECT_THROW(Predictor(m, opts_for(PredictMode::FastTsc, false, 2)), ConfigError);
  PredictOptions t;
  t.T_test = 5;
  EXPECT_THROW(Predictor(m, t), ConfigError);
  t.T_test = -1;
  EXPECT_THROW(Predictor(m, t), ConfigError);
  EXPECT_THROW(predict(m, Eigen::VectorXd::Ones(5)), DimensionError);
  EXPECT_EQ(parse_mode("full"), PredictMode::FullDsc);
  EXPECT_THROW(parse_mode("slow"), ConfigError);
}

TEST(Metrics, Examples) {
  Metrics a = metrics_from_predictions({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  EXPECT_EQ(a.error_rate, 0.0);
  Metrics b = metrics_from_predictions({2}, {0}, 3);
  EXPECT_EQ(b.error_rate, 1.0);
  EXPECT_EQ(b.confusion.sum(), 1);
  EXPECT_EQ(b.confusion(2, 0), 1);
  EXPECT_TRUE(std::isnan(b.per_class_error[0]));
  EXPECT_EQ(b.per_class_error[2], 1.0);
  EXPECT_THROW(metrics_from_predictions({}, {}, 2), ConfigError);
  EXPECT_THROW(metrics_from_predictions({0}, {0, 1}, 2), DimensionError);
  EXPECT_THROW(metrics_from_predictions({0}, {3}, 2), ConfigError);
}

TEST(Metrics, RandomGuessingErrorRate) {
  std::mt19937_64 rng(86);
  std::uniform_int_distribution<int> c(0, 3);
  std::vector<int> truth(1000), guess(1000);
  for (int i = 0; i < 1000; ++i) {
    truth[static_cast<std::size_t>(i)] = i % 4;
    guess[static_cast<std::size_t>(i)] = c(rng);
  }
  EXPECT_NEAR(metrics_from_predictions(truth, guess, 4).error_rate, 0.75, 0.05);
}

TEST(Evaluate, ThreadIndependentAndCsv) {
  std::mt19937_64 rng(87);
  const DdlModel m = random_model(rng, 8, 12, 3, 2, LossKind::logistic());
  const Eigen::MatrixXd Y = gaussian(8, 40, rng);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  const Metrics a = evaluate(m, Y, labels, {}, 1);
  const Metrics b = evaluate(m, Y, labels, {}, 4);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.mean_residual, b.mean_residual);
  EXPECT_EQ(a.confusion.sum(), 40);
  EXPECT_THROW(evaluate(m, Y.topRows(7), labels), DimensionError);
  EXPECT_THROW(evaluate(m, Eigen::MatrixXd(8, 0), std::vector<int>{}), ConfigError);

  std::ostringstream out;
  write_metrics_header(out, 3);
  Metrics c = metrics_from_predictions({0, 0}, {0, 1}, 3);
  c.runtime_ms = 12.5;
  write_metrics_row(out, "synthetic", {}, m, c);
  EXPECT_EQ(out.str(),
            "dataset,mode,robust,K,T,loss,error_rate,per_class_error_0,per_class_error_1,per_class_error_2,runtime_ms\n"
            "synthetic,fast,0,12,2,logistic,0.5,0.5,nan,nan,12.5\n");
}
