#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "rll/ranked_list_loss.hpp"
#include "test_support.hpp"

namespace rll {
namespace {

// Query 0 of class 0 with the given distances to every other point.
MatrixXd query_row_distances(const std::vector<double>& row) {
  const auto n = static_cast<Eigen::Index>(row.size());
  MatrixXd d = MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) d(0, j) = d(j, 0) = row[j];
  return d;
}

MinedSets<double> sets(std::vector<double> pos, std::vector<double> neg) {
  MinedSets<double> m;
  for (std::size_t i = 0; i < pos.size(); ++i) m.positive_indices.push_back(1 + i);
  for (std::size_t i = 0; i < neg.size(); ++i) m.negative_indices.push_back(10 + i);
  m.positive_distances = std::move(pos);
  m.negative_distances = std::move(neg);
  return m;
}

TEST(MarginPairLoss, HingeValues) {
  const RllParams p;  // alpha 1.2, m 0.4
  EXPECT_EQ(margin_pair_loss(1.5, false, p), 0.0);
  EXPECT_EQ(margin_pair_loss(p.positive_boundary(), true, p), 0.0);
  EXPECT_NEAR(margin_pair_loss(0.8, true, p), 0.0, 1e-15);
  EXPECT_NEAR(margin_pair_loss(1.0, false, p), 0.2, 1e-15);
}

TEST(MineSets, StrictInequalities) {
  const Labels y = {0, 0, 0, 1, 1};
  const RllParams p;
  const auto mined = mine_sets(0, query_row_distances({0.0, 0.5, 0.9, 1.0, 1.3}), y, p);
  EXPECT_EQ(mined.positive_indices, std::vector<Eigen::Index>({2}));
  EXPECT_EQ(mined.negative_indices, std::vector<Eigen::Index>({3}));

  const auto easy = mine_sets(0, query_row_distances({0.0, 0.5, 0.7, 1.3, 1.9}), y, p);
  EXPECT_TRUE(easy.positive_indices.empty());
  EXPECT_TRUE(easy.negative_indices.empty());

  const auto edge = mine_sets(0, query_row_distances({0.0, 0.1, p.positive_boundary(), 1.2, 1.3}),
                              y, p);
  EXPECT_TRUE(edge.positive_indices.empty());
  EXPECT_TRUE(edge.negative_indices.empty());
}

TEST(MineSets, RejectsBadQuery) {
  const Labels y = {0, 1};
  EXPECT_RLL_ERROR(mine_sets(2, MatrixXd::Zero(2, 2), y, RllParams{}), ErrorKind::kRange);
  EXPECT_RLL_ERROR(mine_sets(0, MatrixXd::Zero(2, 3), y, RllParams{}), ErrorKind::kShape);
}

TEST(Weights, NegativeExamples) {
  RllParams p;
  p.t_n = 0.0;
  auto w = weight_negatives<double>(std::vector<double>{1.0, 1.1}, p);
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
  p.t_n = 10.0;
  w = weight_negatives<double>(std::vector<double>{1.1}, p);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  w = weight_negatives<double>(std::vector<double>{1.1, 1.2}, p);
  const double e1 = std::exp(1.0);
  EXPECT_NEAR(w[0], e1 / (e1 + 1.0), 1e-12);
  EXPECT_NEAR(w[0], 0.73106, 5e-6);
  EXPECT_NEAR(w[1], 0.26894, 5e-6);
  EXPECT_RLL_ERROR(weight_negatives<double>(std::vector<double>{}, p), ErrorKind::kEmptySet);
}

TEST(Weights, PositiveExamples) {
  RllParams p;
  p.t_p = 0.0;
  auto w = weight_positives<double>(std::vector<double>{0.9, 1.1}, p);
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  p.t_p = 5.0;
  w = weight_positives<double>(std::vector<double>{0.9, 1.1}, p);
  EXPECT_NEAR(w[0], 0.26894, 5e-6);
  EXPECT_NEAR(w[1], 0.73106, 5e-6);
  p.t_p = -5.0;
  w = weight_positives<double>(std::vector<double>{0.9, 1.1}, p);
  EXPECT_NEAR(w[0], 0.73106, 5e-6);
  EXPECT_NEAR(w[1], 0.26894, 5e-6);
  EXPECT_RLL_ERROR(weight_positives<double>(std::vector<double>{}, p), ErrorKind::kEmptySet);
}

TEST(Weights, SumToOneAndMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.0, 1.2);
  RllParams p;
  p.t_n = 7.0;
  p.t_p = -3.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> dist(1 + trial % 9);
    for (double& x : dist) x = d(rng);
    const auto wn = weight_negatives<double>(dist, p);
    const auto wp = weight_positives<double>(dist, p);
    double sn = 0, sp = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      sn += wn[i];
      sp += wp[i];
      for (std::size_t j = 0; j < dist.size(); ++j) {
        if (dist[i] < dist[j]) {
          EXPECT_GT(wn[i], wn[j]);
        }
      }
    }
    EXPECT_NEAR(sn, 1.0, 1e-12);
    EXPECT_NEAR(sp, 1.0, 1e-12);
  }
}

TEST(Weights, LargeTemperatureStaysFinite) {
  RllParams p;
  p.t_n = 1e4;
  const auto w = weight_negatives<double>(std::vector<double>{0.0, 0.1}, p);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 0.0);
}

TEST(SetLosses, PositiveExamples) {
  RllParams p;
  EXPECT_EQ(loss_positive_set(sets({}, {}), p), 0.0);
  p.t_p = 3.0;
  EXPECT_NEAR(loss_positive_set(sets({1.0}, {}), p), 0.2, 1e-15);
  p.t_p = 0.0;
  EXPECT_NEAR(loss_positive_set(sets({0.9, 1.1}, {}), p), 0.2, 1e-15);
}

TEST(SetLosses, NegativeExamples) {
  RllParams p;
  EXPECT_EQ(loss_negative_set(sets({}, {}), p), 0.0);
  p.t_n = 0.0;
  EXPECT_NEAR(loss_negative_set(sets({}, {1.0, 1.1}), p), 0.15, 1e-15);
  p.t_n = 10.0;
  const double e1 = std::exp(1.0);
  EXPECT_NEAR(loss_negative_set(sets({}, {1.0, 1.1}), p), (0.2 * e1 + 0.1) / (e1 + 1.0), 1e-15);
  EXPECT_NEAR(loss_negative_set(sets({}, {1.0, 1.1}), p), 0.17311, 5e-6);
}

TEST(SetLosses, ZeroTemperatureIsUnweightedMean) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(0.8, 2.0), neg(0.0, 1.2);
  RllParams p;
  p.t_n = p.t_p = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> dp(1 + trial % 5), dn(1 + trial % 7);
    double mp = 0, mn = 0;
    for (double& x : dp) mp += (x = pos(rng)) - p.positive_boundary();
    for (double& x : dn) mn += p.alpha - (x = neg(rng));
    mp /= dp.size();
    mn /= dn.size();
    const auto m = sets(dp, dn);
    EXPECT_NEAR(loss_positive_set(m, p), mp, 1e-12);
    EXPECT_NEAR(loss_negative_set(m, p), mn, 1e-12);
  }
}

TEST(QueryLoss, CombinesSets) {
  RllParams p;
  const auto b = combine_set_losses(sets({1.0}, {1.1}), p);
  EXPECT_NEAR(b.loss_p, 0.2, 1e-15);
  EXPECT_NEAR(b.loss_n, 0.1, 1e-15);
  EXPECT_NEAR(b.loss_total, 0.15, 1e-15);
  EXPECT_EQ(b.mined_positive_count, 1u);
  const auto empty = combine_set_losses(sets({}, {}), p);
  EXPECT_EQ(empty.loss_p, 0.0);
  EXPECT_EQ(empty.loss_n, 0.0);
  EXPECT_EQ(empty.loss_total, 0.0);
  EXPECT_EQ(empty.mined_negative_count, 0u);
}

TEST(BatchLoss, HandChosenFourPoints) {
  MatrixXd e(4, 2);
  e << 1.0, 0.0,  //
      0.3, 0.954,  //
      0.8, 0.6,   //
      -0.6, 0.8;
  const Labels y = {0, 0, 1, 1};
  const RllParams p{1.2, 0.4, 10.0, 2.0, 0.5};
  const auto batch = rll_batch_loss(e, y, p);
  const double expected = static_cast<double>(oracle::rll(e, y, 1.2, 0.4, 10.0, 2.0, 0.5));
  EXPECT_NEAR(batch.value, expected, 1e-15);
  EXPECT_GT(batch.value, 0.0);
  double mean = 0;
  for (const auto& q : batch.queries) mean += q.loss_total;
  EXPECT_NEAR(batch.value, mean / 4.0, 1e-16);
}

TEST(BatchLoss, MatchesOracleOnRandomBatches) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + trial % 3, k = 2 + trial % 2;
    const MatrixXd e = oracle::unit_rows(c * k, 3 + trial % 5, rng);
    const Labels y = oracle::block_labels(c, k);
    RllParams p;
    p.alpha = 0.8 + 0.8 * u(rng);
    p.margin = p.alpha * u(rng);
    p.t_n = 20 * u(rng);
    p.t_p = 20 * u(rng) - 10;
    p.lambda = u(rng);
    const double got = rll_batch_loss(e, y, p).value;
    const oracle::Real want = oracle::rll(e, y, p.alpha, p.margin, p.t_n, p.t_p, p.lambda);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(std::abs(got - want), 1e-10 * std::max<oracle::Real>(std::abs(want), 1e-12));
  }
}

TEST(BatchLoss, SeparatedBatchIsZero) {
  MatrixXd e(6, 3);
  e << 1, 0.01, 0, 1, -0.01, 0, 0, 1, 0.01, 0, 1, -0.01, 0.01, 0, 1, -0.01, 0, 1;
  e = normalize_rows(e);
  const Labels y = {0, 0, 1, 1, 2, 2};
  EXPECT_EQ(rll_batch_loss(e, y, RllParams{}).value, 0.0);
}

TEST(BatchLoss, RejectsDegenerateBatches) {
  const MatrixXd e = MatrixXd::Identity(3, 3);
  EXPECT_RLL_ERROR(rll_batch_loss(e, Labels{0, 0, 0}, RllParams{}), ErrorKind::kConfiguration);
  EXPECT_RLL_ERROR(rll_batch_loss(e, Labels{0, 1}, RllParams{}), ErrorKind::kShape);
  RllParams bad;
  bad.margin = 1.5;
  EXPECT_RLL_ERROR(rll_batch_loss(e, Labels{0, 1, 1}, bad), ErrorKind::kParameter);
}

TEST(SimplerParams, Reparameterization) {
  const RllParams p = simpler_params(0.4, 10.0);
  EXPECT_DOUBLE_EQ(p.alpha, 1.2);
  EXPECT_NEAR(p.positive_boundary(), 0.8, 1e-15);
  EXPECT_EQ(p.t_p, 0.0);
  EXPECT_EQ(p.lambda, 0.5);
  const RllParams z = simpler_params(0.0, 10.0);
  EXPECT_EQ(z.alpha, 1.0);
  EXPECT_EQ(z.positive_boundary(), 1.0);
  EXPECT_RLL_ERROR(simpler_params(-0.1, 10.0), ErrorKind::kParameter);
  EXPECT_RLL_ERROR(simpler_params(2.5, 10.0), ErrorKind::kParameter);
}

TEST(SimplerParams, MatchesDirectForm) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const MatrixXd e = oracle::unit_rows(9, 4, rng);
    const Labels y = oracle::block_labels(3, 3);
    const double m = 1.2 * u(rng), tn = 20 * u(rng);
    const double simpler = rll_batch_loss(e, y, simpler_params(m, tn)).value;
    const double full = rll_batch_loss(e, y, RllParams{1.0 + m / 2.0, m, tn, 0.0, 0.5}).value;
    EXPECT_LE(std::abs(simpler - full), 1e-12);
    EXPECT_NEAR(simpler, static_cast<double>(oracle::rll_simpler(e, y, m, tn)), 1e-12);
  }
}

TEST(Schedule, LinearRamp) {
  const TemperatureSchedule s{12.0, 4.0, 30000};
  EXPECT_EQ(schedule_temperature(s, 0), 12.0);
  EXPECT_EQ(schedule_temperature(s, 15000), 8.0);
  EXPECT_NEAR(schedule_temperature(s, 29999), 4.0 + 8.0 / 30000.0, 1e-12);
  EXPECT_RLL_ERROR(schedule_temperature(s, 30000), ErrorKind::kRange);
  EXPECT_RLL_ERROR(schedule_temperature(s, -1), ErrorKind::kRange);
  EXPECT_EQ(schedule_temperature(TemperatureSchedule{10, 10, 100}, 73), 10.0);
}

}  // namespace
}  // namespace rll
