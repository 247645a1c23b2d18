#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "rll/training.hpp"
#include "test_support.hpp"

namespace rll {
namespace {

Dataset small_dataset(int classes, int per_class, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.features.resize(classes * per_class, dim);
  for (int c = 0; c < classes; ++c) {
    Eigen::VectorXd center(dim);
    for (int j = 0; j < dim; ++j) center(j) = 3.0 * g(rng);
    for (int k = 0; k < per_class; ++k) {
      for (int j = 0; j < dim; ++j) d.features(c * per_class + k, j) = center(j) + g(rng);
      d.labels.push_back(c);
    }
  }
  d.num_classes = classes;
  d.split = Split::kTrain;
  return d;
}

TEST(SampleBatch, Composition) {
  std::mt19937_64 rng(51);
  const Dataset two = small_dataset(2, 5, 3, 1);
  const MiniBatch b = sample_batch(two, 2, 2, rng);
  EXPECT_EQ(b.features.rows(), 4);
  EXPECT_EQ(std::count(b.labels.begin(), b.labels.end(), 0), 2);
  EXPECT_EQ(std::count(b.labels.begin(), b.labels.end(), 1), 2);
  for (std::size_t i = 0; i < b.indices.size(); ++i) {
    EXPECT_EQ(b.labels[i], two.labels[b.indices[i]]);
    EXPECT_EQ(b.features.row(i), two.features.row(b.indices[i]));
  }

  const Dataset many = small_dataset(70, 4, 2, 2);
  const MiniBatch big = sample_batch(many, 60, 3, rng);
  EXPECT_EQ(big.features.rows(), 180);
  EXPECT_EQ(std::set<int>(big.labels.begin(), big.labels.end()).size(), 60u);
  EXPECT_RLL_ERROR(sample_batch(two, 3, 2, rng), ErrorKind::kData);
}

TEST(SampleBatch, Deterministic) {
  const Dataset d = small_dataset(6, 5, 3, 3);
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(sample_batch(d, 4, 3, a).indices, sample_batch(d, 4, 3, b).indices);
}

TEST(SampleBatch, SmallClassesRepeatPoints) {
  std::mt19937_64 rng(52);
  const MiniBatch b = sample_batch(small_dataset(3, 1, 2, 4), 3, 2, rng);
  EXPECT_EQ(b.features.rows(), 6);
}

TEST(Sgd, UpdateRule) {
  TrainConfig c;
  c.learning_rate = 0.1;
  c.weight_decay = 0.0;
  std::vector<MatrixXd> p = {MatrixXd::Constant(2, 2, 1.0)};
  OptimizerState s = make_optimizer_state(p);
  sgd_update(p, {MatrixXd::Zero(2, 2)}, c, s);
  EXPECT_EQ(p[0], MatrixXd::Constant(2, 2, 1.0));

  c.momentum = 0.0;
  sgd_update(p, {MatrixXd::Constant(2, 2, 2.0)}, c, s);
  EXPECT_NEAR(p[0](0, 0), 0.8, 1e-15);

  c.momentum = 0.9;
  std::vector<MatrixXd> q = {MatrixXd::Zero(1, 1)};
  OptimizerState m = make_optimizer_state(q);
  const MatrixXd g = MatrixXd::Constant(1, 1, 3.0);
  sgd_update(q, {g}, c, m);
  const double first = q[0](0, 0);
  sgd_update(q, {g}, c, m);
  EXPECT_NEAR(first, -0.1 * 3.0, 1e-15);
  EXPECT_NEAR(q[0](0, 0) - first, -0.1 * 1.9 * 3.0, 1e-15);

  c.momentum = 0.0;
  c.weight_decay = 0.5;
  std::vector<MatrixXd> r = {MatrixXd::Constant(1, 1, 2.0)};
  OptimizerState w = make_optimizer_state(r);
  sgd_update(r, {MatrixXd::Zero(1, 1)}, c, w);
  EXPECT_NEAR(r[0](0, 0), 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}

TEST(Train, ZeroIterationsReturnsInitialization) {
  const Dataset d = small_dataset(4, 5, 6, 5);
  TrainConfig c;
  c.max_iter = 0;
  c.batch_classes = 3;
  c.embed_dim = 3;
  const TrainResult r = train(d, c);
  std::mt19937_64 rng(c.seed);
  const EmbeddingModel init = make_linear_model(6, 3, rng);
  ASSERT_EQ(r.model.parameters.size(), init.parameters.size());
  for (std::size_t i = 0; i < init.parameters.size(); ++i) {
    EXPECT_EQ(r.model.parameters[i], init.parameters[i]);
  }
  EXPECT_TRUE(r.loss_history.empty());
}

TEST(Train, DeterministicAndDecreasing) {
  const Dataset d = small_dataset(6, 8, 5, 6);
  TrainConfig c;
  c.max_iter = 300;
  c.batch_classes = 4;
  c.embed_dim = 3;
  const TrainResult a = train(d, c);
  const TrainResult b = train(d, c);
  EXPECT_EQ(a.loss_history, b.loss_history);
  const double head = std::accumulate(a.loss_history.begin(), a.loss_history.begin() + 30, 0.0);
  const double tail = std::accumulate(a.loss_history.end() - 30, a.loss_history.end(), 0.0);
  EXPECT_LT(tail, head);
}

TEST(Train, ScheduleIsLogged) {
  const Dataset d = small_dataset(4, 4, 3, 7);
  TrainConfig c;
  c.max_iter = 40;
  c.batch_classes = 3;
  c.loss.kind = LossKind::kRll;
  c.loss.rll = RllParams{};
  c.schedule = TemperatureSchedule{12.0, 4.0, 40};
  const TrainResult r = train(d, c);
  ASSERT_EQ(r.temperature_history.size(), 40u);
  EXPECT_EQ(r.temperature_history.front(), 12.0);
  EXPECT_NEAR(r.temperature_history.back(), 4.0 + 8.0 / 40.0, 1e-12);
}

TEST(Train, EveryLossRuns) {
  const Dataset d = small_dataset(5, 6, 4, 8);
  for (LossKind kind : kAllLosses) {
    TrainConfig c;
    c.max_iter = 50;
    c.batch_classes = 3;
    c.batch_per_class = 2;
    c.loss.kind = kind;
    if (kind == LossKind::kRll) c.loss.rll = RllParams{};
    const TrainResult r = train(d, c);
    EXPECT_EQ(r.loss_history.size(), 50u) << to_string(kind);
    for (double v : r.loss_history) EXPECT_TRUE(std::isfinite(v)) << to_string(kind);
    EXPECT_EQ(r.proxies.rows(), kind == LossKind::kProxyNca ? 5 : 0);
  }
}

TEST(Train, RejectsBadConfig) {
  const Dataset d = small_dataset(3, 3, 2, 9);
  TrainConfig c;
  c.learning_rate = 0.0;
  EXPECT_RLL_ERROR(train(d, c), ErrorKind::kParameter);
  TrainConfig s;
  s.loss.kind = LossKind::kTriplet;
  s.schedule = TemperatureSchedule{};
  EXPECT_RLL_ERROR(s.validate(), ErrorKind::kConfiguration);
}

TEST(BatchObjective, ProxyGradientFlowsThroughNormalization) {
  std::mt19937_64 rng(53);
  const MatrixXd e = oracle::unit_rows(6, 4, rng);
  const Labels y = oracle::block_labels(3, 2);
  const MatrixXd raw = 1.7 * oracle::unit_rows(4, 4, rng) + 0.1 * MatrixXd::Ones(4, 4);
  LossConfig loss;
  loss.kind = LossKind::kProxyNca;
  const BatchObjective o = batch_objective(e, y, loss, raw);
  const auto r = finite_difference_check(
      [&](const Matrix<long double>& p) {
        return proxy_nca_loss(e.cast<long double>(), y, normalize_rows(p));
      },
      raw, o.proxy_gradient, 1e-6, 1e-6);
  EXPECT_TRUE(r.pass) << r.max_relative_error;
}

TEST(Checkpoint, RoundTrip) {
  const Dataset d = small_dataset(4, 4, 5, 10);
  for (LossKind kind : {LossKind::kRllSimpler, LossKind::kProxyNca}) {
    TrainConfig c;
    c.max_iter = 20;
    c.batch_classes = 3;
    c.architecture = Architecture::kHidden;
    c.hidden_dim = 6;
    c.loss.kind = kind;
    if (kind == LossKind::kRllSimpler) c.schedule = TemperatureSchedule{20.0, 5.0, 20};
    const TrainResult r = train(d, c);
    std::stringstream buf;
    write_checkpoint(buf, r, c);
    const Checkpoint ck = read_checkpoint(buf, "memory");
    ASSERT_EQ(ck.model.parameters.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ck.model.parameters[i], r.model.parameters[i]);
    EXPECT_EQ(ck.proxies, r.proxies);
    EXPECT_EQ(describe(ck.config), describe(c));
  }
}

TEST(Checkpoint, MalformedInput) {
  std::stringstream bad("not-a-checkpoint\n");
  EXPECT_RLL_ERROR(read_checkpoint(bad, "memory"), ErrorKind::kParse);
  const Dataset d = small_dataset(3, 3, 2, 11);
  TrainConfig c;
  c.max_iter = 1;
  c.batch_classes = 2;
  std::stringstream buf;
  write_checkpoint(buf, train(d, c), c);
  std::string text = buf.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_RLL_ERROR(read_checkpoint(truncated, "memory"), ErrorKind::kParse);
}

}  // namespace
}  // namespace rll
