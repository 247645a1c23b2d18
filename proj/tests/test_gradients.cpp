#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "rll/gradcheck.hpp"
#include "rll/gradients.hpp"
#include "test_support.hpp"

namespace rll {
namespace {

MatrixXd separated_batch() {
  MatrixXd e(6, 3);
  e << 1, 0.01, 0, 1, -0.01, 0, 0, 1, 0.01, 0, 1, -0.01, 0.01, 0, 1, -0.01, 0, 1;
  return normalize_rows(e);
}

GradCheckReport check_rll(const MatrixXd& e, const Labels& y, const RllParams& p) {
  const FrozenRllLoss frozen(e, y, p);
  return finite_difference_check([&](const Matrix<long double>& x) { return frozen(x); }, e,
                                 rll_batch_gradients(e, y, p), 1e-6, 1e-5,
                                 rll_kink_rows(e, y, p, 1e-5));
}

TEST(RllGradients, SeparatedBatchIsZero) {
  const MatrixXd e = separated_batch();
  const Labels y = {0, 0, 1, 1, 2, 2};
  const MatrixXd g = rll_batch_gradients(e, y, RllParams{});
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  const GradCheckReport r = check_rll(e, y, RllParams{});
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(RllGradients, SingleNegativePair) {
  MatrixXd e(2, 2);
  e << 1, 0, 0.6, 0.8;  // d = sqrt(0.8) < alpha
  const Labels y = {0, 1};
  const RllParams p;
  const MatrixXd g = rll_batch_gradients(e, y, p);
  const double d = std::sqrt(0.8);
  // Weight 1, lambda 0.5, N = 2; each point is the query of its own list.
  const Eigen::RowVector2d row0 = -0.25 * (e.row(0) - e.row(1)) / d;
  EXPECT_LE((g.row(0) - row0).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((g.row(1) + row0).cwiseAbs().maxCoeff(), 1e-15);
  // Moving the query along -gradient increases the negative-pair distance.
  EXPECT_LT(g.row(0).dot(e.row(0) - e.row(1)), 0.0);
  EXPECT_TRUE(check_rll(e, y, p).pass);
}

TEST(RllGradients, PositivePairDirection) {
  MatrixXd e(3, 2);
  e << 1, 0, -1, 0, 0, 1;  // positives at d = 2, negative at sqrt(2) > alpha
  const Labels y = {0, 0, 1};
  const MatrixXd g = rll_batch_gradients(e, y, RllParams{});
  EXPECT_GT(g.row(0).dot(e.row(0) - e.row(1)), 0.0);
  EXPECT_EQ(g.row(2).norm(), 0.0);
}

TEST(RllGradients, RandomBatchMatchesFrozenFiniteDifferences) {
  std::mt19937_64 rng(31);
  const RllParams p{1.2, 0.4, 10.0, 5.0, 0.5};
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd e = oracle::unit_rows(12, 6, rng);
    const GradCheckReport r = check_rll(e, oracle::block_labels(4, 3), p);
    EXPECT_TRUE(r.pass) << r.max_relative_error;
    EXPECT_GT(r.checked, 0u);
  }
}

TEST(RllGradients, CoincidentActivePairIsSingular) {
  MatrixXd e(3, 2);
  e << 1, 0, 1, 0, 0, 1;
  EXPECT_RLL_ERROR(rll_batch_gradients(e, Labels{0, 1, 1}, RllParams{}),
                   ErrorKind::kSingularPair);
}

TEST(RllGradients, SumOfQueryContributions) {
  std::mt19937_64 rng(32);
  const MatrixXd e = oracle::unit_rows(9, 5, rng);
  const Labels y = oracle::block_labels(3, 3);
  const RllParams p{1.3, 0.5, 8.0, -2.0, 0.3};
  const MatrixXd dist = pairwise_distances(e);
  MatrixXd total = MatrixXd::Zero(9, 5);
  for (Eigen::Index i = 0; i < 9; ++i) {
    total.row(i) += rll_query_gradient(i, e, dist, y, p).transpose();
  }
  total /= 9.0;
  EXPECT_LE((total - rll_batch_gradients(e, y, p)).cwiseAbs().maxCoeff(), 1e-12);

  // Linear in lambda, since weights and sets do not depend on it.
  RllParams p0 = p, p1 = p;
  p0.lambda = 0.0;
  p1.lambda = 1.0;
  const MatrixXd mix = (1 - p.lambda) * rll_batch_gradients(e, y, p0) +
                       p.lambda * rll_batch_gradients(e, y, p1);
  EXPECT_LE((mix - rll_batch_gradients(e, y, p)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RllGradients, RotationEquivariant) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd e = oracle::unit_rows(12, 7, rng);
    const MatrixXd q = oracle::random_rotation(7, rng);
    const Labels y = oracle::block_labels(4, 3);
    const RllParams p{1.2, 0.4, 10.0, 3.0, 0.5};
    const MatrixXd lhs = rll_batch_gradients(MatrixXd(e * q), y, p);
    const MatrixXd rhs = rll_batch_gradients(e, y, p) * q;
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(BaselineGradients, TripletInactiveIsZero) {
  const MatrixXd e = separated_batch();
  const Labels y = {0, 0, 1, 1, 2, 2};
  EXPECT_EQ(triplet_gradients(e, y, 0.4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(BaselineGradients, NPairSymmetricConfiguration) {
  MatrixXd e(4, 2);
  e << 1, 0, 0.6, 0.8, 1, 0, 0.6, -0.8;
  const Labels y = {0, 0, 1, 1};
  const auto g = baseline_gradients<double>(e, y, BaselineLoss::kNPairMc, BaselineParams{});
  const auto r = finite_difference_check(
      [&](const Matrix<long double>& x) {
        return baseline_loss(x, y, BaselineLoss::kNPairMc, BaselineParams{});
      },
      e, g.embeddings, 1e-6, 1e-5);
  EXPECT_TRUE(r.pass) << r.max_relative_error;
}

TEST(BaselineGradients, ProxyAnchorOnItsProxy) {
  MatrixXd e(1, 3), proxies(2, 3);
  e << 0, 1, 0;
  proxies << 0, 1, 0, 0, -3, 0;
  const Labels y = {0};
  const auto g = baseline_gradients<double>(e, y, BaselineLoss::kProxyNca, BaselineParams{}, proxies);
  const Matrix<long double> p_ld = proxies.cast<long double>();
  const auto r = finite_difference_check(
      [&](const Matrix<long double>& x) {
        return baseline_loss(x, y, BaselineLoss::kProxyNca, BaselineParams{}, p_ld);
      },
      e, g.embeddings, 1e-6, 1e-5);
  EXPECT_TRUE(r.pass) << r.max_relative_error;
  const Matrix<long double> e_ld = e.cast<long double>();
  const auto rp = finite_difference_check(
      [&](const Matrix<long double>& x) {
        return baseline_loss(e_ld, y, BaselineLoss::kProxyNca, BaselineParams{}, x);
      },
      proxies, g.proxies, 1e-6, 1e-5);
  EXPECT_TRUE(rp.pass) << rp.max_relative_error;
}

TEST(BaselineGradients, RotationEquivariant) {
  std::mt19937_64 rng(34);
  const MatrixXd e = oracle::unit_rows(9, 5, rng);
  const MatrixXd proxies = oracle::unit_rows(4, 5, rng);
  const MatrixXd q = oracle::random_rotation(5, rng);
  const Labels y = oracle::block_labels(3, 3);
  for (BaselineLoss loss : {BaselineLoss::kTriplet, BaselineLoss::kNPairMc,
                            BaselineLoss::kLiftedStruct, BaselineLoss::kProxyNca}) {
    const auto a = baseline_gradients<double>(MatrixXd(e * q), y, loss, BaselineParams{},
                                              MatrixXd(proxies * q));
    const auto b = baseline_gradients<double>(e, y, loss, BaselineParams{}, proxies);
    EXPECT_LE((a.embeddings - b.embeddings * q).cwiseAbs().maxCoeff(), 1e-9) << to_string(loss);
    const double la = baseline_loss<double>(MatrixXd(e * q), y, loss, BaselineParams{},
                                            MatrixXd(proxies * q));
    const double lb = baseline_loss<double>(e, y, loss, BaselineParams{}, proxies);
    EXPECT_NEAR(la, lb, 1e-9) << to_string(loss);
  }
}

TEST(FiniteDifference, QuadraticIsExact) {
  MatrixXd x(2, 3);
  x << 0.3, -1.2, 2.0, 0.5, 0.0, -0.7;
  const auto r = finite_difference_check(
      [](const Matrix<long double>& m) { return m.squaredNorm(); }, x, MatrixXd(2.0 * x), 1e-6,
      1e-5);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_EQ(r.checked, 6u);
  EXPECT_EQ(r.per_coordinate_errors.size(), 6u);
}

TEST(FiniteDifference, DetectsCorruptedEntry) {
  MatrixXd x = MatrixXd::Constant(2, 2, 0.5);
  MatrixXd g = 2.0 * x;
  g(1, 0) += 1e-3;
  const auto r = finite_difference_check(
      [](const Matrix<long double>& m) { return m.squaredNorm(); }, x, g, 1e-6, 1e-5);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.worst_row, 1);
  EXPECT_EQ(r.worst_col, 0);
}

TEST(FiniteDifference, ExcludedRowsAndErrors) {
  MatrixXd x = MatrixXd::Ones(2, 2);
  const auto r = finite_difference_check(
      [](const Matrix<long double>& m) { return m.squaredNorm(); }, x, MatrixXd(2.0 * x), 1e-6,
      1e-5, {true, false});
  EXPECT_EQ(r.excluded, 2u);
  EXPECT_TRUE(std::isnan(r.per_coordinate_errors[0]));
  EXPECT_RLL_ERROR(finite_difference_check(
                       [](const Matrix<long double>&) {
                         return std::numeric_limits<long double>::infinity();
                       },
                       x, x, 1e-6, 1e-5),
                   ErrorKind::kNumerical);
  EXPECT_RLL_ERROR(finite_difference_check(
                       [](const Matrix<long double>& m) { return m.sum(); }, x, x, 0.0, 1e-5),
                   ErrorKind::kParameter);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
}

TEST(GradCheckRunner, AllLossesPass) {
  for (LossKind loss : kAllLosses) {
    const GradCheckSummary s = run_gradcheck(loss, 10, 1e-5, 1e-6, 3);
    EXPECT_TRUE(s.all_pass) << to_string(loss) << " " << s.worst_error;
  }
}

TEST(GradCheckRunner, ZeroToleranceFails) {
  EXPECT_FALSE(run_gradcheck(LossKind::kTriplet, 5, 0.0, 1e-6, 3).all_pass);
}

}  // namespace
}  // namespace rll
