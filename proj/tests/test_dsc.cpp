#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddl/dsc.hpp"
#include "test_util.hpp"

using namespace ddl;
using ddl::testing::gaussian;
using ddl::testing::planted_code;
using ddl::testing::unit_columns;

namespace {

std::vector<LossKind> all_losses() {
  return {LossKind::square(), LossKind::exponential(), LossKind::logistic(), LossKind::smooth_hinge()};
}

DscProblem random_problem(std::mt19937_64& rng, Index d, Index K, Index C, int T, LossKind loss) {
  DscProblem p;
  p.A = unit_columns(gaussian(d, K, rng));
  p.b = gaussian(d, 1, rng);
  p.signed_classifiers = gaussian(K, C, rng);
  p.bias_offsets = 0.3 * gaussian(C, 1, rng);
  std::uniform_real_distribution<double> g(0.5, 4.0);
  p.gamma.resize(C);
  for (Index j = 0; j < C; ++j) p.gamma[j] = g(rng);
  p.loss = loss;
  p.sparsity = T;
  return p;
}

// Square-loss DSC written out as one weighted least-squares problem:
// rows of A with target b, plus rows sqrt(2/gamma_j) g_j^T with target
// sqrt(2/gamma_j) (1 - beta_j).
void square_stack(const DscProblem& p, Eigen::MatrixXd& M, Eigen::VectorXd& r) {
  const Index d = p.A.rows(), K = p.A.cols(), C = p.signed_classifiers.cols();
  M.resize(d + C, K);
  r.resize(d + C);
  M.topRows(d) = p.A;
  r.head(d) = p.b;
  for (Index j = 0; j < C; ++j) {
    const double w = std::sqrt(2.0 / p.gamma[j]);
    M.row(d + j) = w * p.signed_classifiers.col(j).transpose();
    r[d + j] = w * (1.0 - p.bias_offsets[j]);
  }
}

double exhaustive_square_minimum(const DscProblem& p, int T) {
  Eigen::MatrixXd M;
  Eigen::VectorXd r;
  square_stack(p, M, r);
  double best = r.squaredNorm();
  for (int s = 1; s <= T; ++s) {
    ddl::testing::for_each_subset(p.A.cols(), s, [&](const std::vector<Index>& sup) {
      const Eigen::VectorXd x = ddl::testing::ls_on_support(M, r, sup);
      best = std::min(best, (r - M * x).squaredNorm());
    });
  }
  return best;
}

}  // namespace

TEST(DscObjective, HandExample) {
  DscProblem p;
  p.A = Eigen::MatrixXd::Identity(2, 2);
  p.b = Eigen::VectorXd::Zero(2);
  p.signed_classifiers = Eigen::MatrixXd::Ones(2, 1);
  p.bias_offsets = Eigen::VectorXd::Zero(1);
  p.gamma = Eigen::VectorXd::Constant(1, 2.0);
  p.loss = LossKind::square();
  EXPECT_DOUBLE_EQ(dsc_objective(p, SparseCode(2)), 1.0);
  p.gamma[0] = 1e300;
  SparseCode x = SparseCode::from_dense(Eigen::Vector2d(0.5, -1.0));
  p.b << 1, 1;
  EXPECT_NEAR(dsc_objective(p, x), 0.25 + 4.0, 1e-12);
}

TEST(DscObjective, GramSpaceMatchesDense) {
  std::mt19937_64 rng(40);
  for (const auto& loss : all_losses()) {
    for (int trial = 0; trial < 10; ++trial) {
      const DscProblem p = random_problem(rng, 12, 20, 3, 4, loss);
      const DscSolver s = DscSolver::from_problem(p);
      const SparseCode x = planted_code(20, 4, rng);
      const double dense = dsc_objective(p, x);
      EXPECT_NEAR(s.objective(x), dense, 1e-10 * std::max(1.0, dense)) << loss_name(loss);
    }
  }
}

TEST(DscObjective, ScaledGramMatchesScaledProblem) {
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd D = unit_columns(gaussian(10, 15, rng));
  const Eigen::VectorXd y = gaussian(10, 1, rng);
  const double sigma = 0.37;
  DscProblem p = random_problem(rng, 10, 15, 2, 3, LossKind::logistic());
  p.A = D / sigma;
  p.b = y / sigma;
  auto base = std::make_shared<Eigen::MatrixXd>(D.transpose() * D);
  const DscSolver s(base, 1.0 / (sigma * sigma), D.transpose() * y / (sigma * sigma), y.squaredNorm() / (sigma * sigma),
                    p.signed_classifiers, p.bias_offsets, p.gamma, p.loss, p.sparsity);
  const SparseCode x = planted_code(15, 3, rng);
  EXPECT_NEAR(s.objective(x), dsc_objective(p, x), 1e-9 * dsc_objective(p, x));
}

TEST(NewtonLinearize, SquareLossTargetsAndWeights) {
  std::mt19937_64 rng(42);
  DscProblem p = random_problem(rng, 6, 8, 3, 2, LossKind::square());
  for (int trial = 0; trial < 3; ++trial) {
    const NewtonState st = newton_linearize(p, planted_code(8, 2, rng));
    for (Index j = 0; j < 3; ++j) {
      EXPECT_NEAR(st.delta[j], 1.0 - p.bias_offsets[j], 1e-12);
      // sqrt(2) times (1/gamma)^{1/2}: the exact weight for the factor 2 on the loss term.
      EXPECT_NEAR(st.h_diag[j], std::sqrt(2.0) * std::sqrt(1.0 / p.gamma[j]), 1e-14);
    }
  }
}

TEST(NewtonLinearize, ExponentialAtZeroMargin) {
  DscProblem p;
  p.A = Eigen::MatrixXd::Identity(3, 3);
  p.b = Eigen::VectorXd::Ones(3);
  p.signed_classifiers = Eigen::MatrixXd::Zero(3, 2);
  p.bias_offsets = Eigen::VectorXd::Zero(2);
  p.gamma = Eigen::Vector2d(0.5, 3.0);
  p.loss = LossKind::exponential();
  const NewtonState st = newton_linearize(p, SparseCode(3));
  for (Index j = 0; j < 2; ++j) {
    EXPECT_DOUBLE_EQ(st.margins[j], 0.0);
    EXPECT_DOUBLE_EQ(st.delta[j], 1.0);
    EXPECT_NEAR(st.h_diag[j], std::sqrt(2.0) * std::sqrt(1.0 / (2.0 * p.gamma[j])), 1e-15);
  }
  EXPECT_NEAR(st.objective, 3.0 + 2.0 * (1.0 / 0.5 + 1.0 / 3.0), 1e-12);
}

TEST(NewtonLinearize, NoClassifiersDegeneratesToOmp) {
  std::mt19937_64 rng(43);
  DscProblem p = random_problem(rng, 10, 16, 0, 3, LossKind::logistic());
  p.signed_classifiers.resize(16, 0);
  p.bias_offsets.resize(0);
  p.gamma.resize(0);
  const NewtonState st = newton_linearize(p, SparseCode(16));
  EXPECT_EQ(st.delta.size(), 0);
  EXPECT_EQ(st.h_diag.size(), 0);
  const DscResult r = dsc_solve(p, SparseCode(16));
  const SparseCode ref = omp_encode(p.A, p.b, 3);
  ASSERT_EQ(r.code.indices, ref.indices);
  for (std::size_t s = 0; s < ref.nnz(); ++s) EXPECT_NEAR(r.code.values[s], ref.values[s], 1e-12);
}

TEST(NewtonLinearize, QuadraticModelIsSecondOrder) {
  // |Omega(z) - q(z)| <= sup|Omega'''| |z - z_p|^3 / 6 near z_p, with the
  // third derivative bound estimated from differences of Omega''.
  for (const auto& loss : all_losses()) {
    for (int i = 0; i <= 40; ++i) {
      const double zp = -3.0 + 0.15 * i;
      const double d2 = loss_d2(loss, zp);
      const double center = zp - loss_ratio12(loss, zp);
      const double c = loss_value(loss, zp) - 0.5 * d2 * (zp - center) * (zp - center);
      double third = 0.0;
      for (int k = -110; k <= 110; ++k) {
        const double a = zp + 0.001 * k;
        third = std::max(third, std::abs(loss_d2(loss, a + 1e-4) - loss_d2(loss, a - 1e-4)) / 2e-4);
      }
      for (double dz : {-0.1, -0.05, -0.02, -0.01, 0.01, 0.02, 0.05, 0.1}) {
        const double z = zp + dz;
        const double q = 0.5 * d2 * (z - center) * (z - center) + c;
        const double err = std::abs(loss_value(loss, z) - q);
        // q is a difference of terms that can be far larger than Omega itself
        const double roundoff = 1e-14 * std::max({1.0, std::abs(c), 0.5 * d2 * (z - center) * (z - center)});
        EXPECT_LE(err, 1.05 * third / 6.0 * std::abs(dz * dz * dz) + roundoff) << loss_name(loss) << " zp=" << zp
                                                                            << " dz=" << dz;
      }
      // value, slope and curvature agree at z_p
      EXPECT_NEAR(0.5 * d2 * (zp - center) * (zp - center) + c, loss_value(loss, zp), 1e-12);
      EXPECT_NEAR(d2 * (zp - center), loss_d1(loss, zp), 1e-9 * std::max(1.0, std::abs(loss_d1(loss, zp))));
    }
  }
}

TEST(NewtonLinearize, StackedSystemEqualsSquareObjective) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    const DscProblem p = random_problem(rng, 8, 12, 3, 3, LossKind::square());
    const NewtonState st = newton_linearize(p, planted_code(12, 2, rng));
    Eigen::MatrixXd M(8 + 3, 12);
    Eigen::VectorXd r(8 + 3);
    M.topRows(8) = p.A;
    r.head(8) = p.b;
    for (Index j = 0; j < 3; ++j) {
      M.row(8 + j) = st.h_diag[j] * p.signed_classifiers.col(j).transpose();
      r[8 + j] = st.h_diag[j] * st.delta[j];
    }
    for (int k = 0; k < 5; ++k) {
      const SparseCode x = planted_code(12, 3, rng);
      const double stacked = (r - M * x.to_dense()).squaredNorm();
      EXPECT_NEAR(dsc_objective(p, x) - stacked, 0.0, 1e-10 * std::max(1.0, stacked));
    }
  }
}

TEST(DscSolve, SquareLossTakesOneIteration) {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 5; ++trial) {
    const DscProblem p = random_problem(rng, 10, 20, 3, 3, LossKind::square());
    const DscResult r = dsc_solve(p, SparseCode(20));
    EXPECT_EQ(r.iterations, 1);
    EXPECT_TRUE(r.converged);
  }
}

TEST(DscSolve, HugeGammaReducesToOmp) {
  std::mt19937_64 rng(46);
  for (const auto& loss : all_losses()) {
    for (int trial = 0; trial < 5; ++trial) {
      DscProblem p = random_problem(rng, 10, 20, 3, 3, loss);
      p.gamma.setConstant(1e12);
      const DscResult r = dsc_solve(p, SparseCode(20));
      const SparseCode ref = omp_encode(p.A, p.b, 3);
      ASSERT_EQ(r.code.indices, ref.indices) << loss_name(loss);
      for (std::size_t s = 0; s < ref.nnz(); ++s) EXPECT_NEAR(r.code.values[s], ref.values[s], 1e-6);
    }
  }
}

TEST(DscSolve, SquareLossReachesExhaustiveOptimumUnderExactRecoveryCondition) {
  // Noiseless planted instances of the stacked least-squares system. When the
  // exact recovery condition max_{k not in S} ||pinv(M_S) m_k||_1 < 1 holds on
  // the column-normalized stack, greedy pursuit must find S and hence the
  // global optimum (zero).
  std::mt19937_64 rng(47);
  int qualifying = 0, attempts = 0;
  while (qualifying < 25 && attempts < 5000) {
    ++attempts;
    DscProblem p = random_problem(rng, 6, 8, 2, 2, LossKind::square());
    const SparseCode truth = planted_code(8, 2, rng);
    p.b = apply(p.A, truth);
    for (Index j = 0; j < 2; ++j) p.bias_offsets[j] = 1.0 - truth.dot(p.signed_classifiers.col(j));
    Eigen::MatrixXd M;
    Eigen::VectorXd target;
    square_stack(p, M, target);
    M = unit_columns(M);
    Eigen::MatrixXd MS(M.rows(), 2);
    for (int s = 0; s < 2; ++s) MS.col(s) = M.col(truth.indices[static_cast<std::size_t>(s)]);
    const Eigen::MatrixXd pinv = MS.completeOrthogonalDecomposition().pseudoInverse();
    double erc = 0.0;
    for (Index k = 0; k < 8; ++k) {
      if (k == truth.indices[0] || k == truth.indices[1]) continue;
      erc = std::max(erc, (pinv * M.col(k)).lpNorm<1>());
    }
    if (erc >= 1.0) continue;
    ++qualifying;
    const double oracle = exhaustive_square_minimum(p, 2);
    const DscResult r = dsc_solve(p, SparseCode(8));
    EXPECT_NEAR(r.objective, oracle, 1e-9) << "attempt " << attempts;
    EXPECT_EQ(r.code.indices, truth.indices) << "attempt " << attempts;
  }
  EXPECT_EQ(qualifying, 25);
  std::printf("exact recovery condition held on %d of %d planted instances\n", qualifying, attempts);
}

TEST(DscSolve, SquareLossAgreementOnUnstructuredInstances) {
  // Greedy selection is not a global solver; the agreement rate on arbitrary
  // instances is reported, and the result can never beat the oracle.
  std::mt19937_64 rng(48);
  int agree = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const DscProblem p = random_problem(rng, 6, 8, 2, 2, LossKind::square());
    const double oracle = exhaustive_square_minimum(p, 2);
    const DscResult r = dsc_solve(p, SparseCode(8));
    EXPECT_GE(r.objective, oracle - 1e-9);
    if (r.objective <= oracle + 1e-9 * std::max(1.0, oracle)) ++agree;
  }
  RecordProperty("agreement", agree);
  std::printf("unstructured K=8 T=2 C=2: %d/%d match the exhaustive optimum\n", agree, trials);
}

TEST(DscSolve, NeverWorseThanStart) {
  std::mt19937_64 rng(49);
  for (const auto& loss : all_losses()) {
    for (int trial = 0; trial < 10; ++trial) {
      const DscProblem p = random_problem(rng, 10, 20, 3, 3, loss);
      const DscSolver s = DscSolver::from_problem(p);
      const SparseCode x0 = omp_encode(p.A, p.b, 3);
      const DscResult r = s.solve(x0, {5, 1e-4});
      EXPECT_LE(r.objective, s.objective(x0)) << loss_name(loss);
      EXPECT_LE(r.code.nnz(), 3u);
      EXPECT_NEAR(r.objective, s.objective(r.code), 1e-12 * std::max(1.0, r.objective));
    }
  }
}

TEST(DscSolve, Errors) {
  std::mt19937_64 rng(50);
  DscProblem p = random_problem(rng, 5, 6, 2, 2, LossKind::logistic());
  EXPECT_THROW(dsc_solve(p, SparseCode(6), {0, 1e-4}), ConfigError);
  EXPECT_THROW(dsc_solve(p, SparseCode(5)), DimensionError);
  DscProblem q = p;
  q.gamma[1] = 0.0;
  EXPECT_THROW(dsc_solve(q, SparseCode(6)), ConfigError);
  q = p;
  q.b = Eigen::VectorXd::Ones(4);
  EXPECT_THROW(dsc_solve(q, SparseCode(6)), DimensionError);
  q = p;
  q.signed_classifiers = Eigen::MatrixXd::Ones(5, 2);
  EXPECT_THROW(dsc_solve(q, SparseCode(6)), DimensionError);
  q = p;
  q.sparsity = 7;
  EXPECT_THROW(dsc_solve(q, SparseCode(6)), ConfigError);
}

TEST(DscSolve, LargeMarginsStayFinite) {
  std::mt19937_64 rng(51);
  DscProblem p = random_problem(rng, 8, 10, 2, 2, LossKind::exponential());
  p.signed_classifiers *= 500.0;
  const DscResult r = dsc_solve(p, SparseCode(10));
  EXPECT_TRUE(std::isfinite(r.objective));
  for (double v : r.code.values) EXPECT_TRUE(std::isfinite(v));
}
