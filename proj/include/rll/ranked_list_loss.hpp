#ifndef RLL_RANKED_LIST_LOSS_HPP
#define RLL_RANKED_LIST_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rll/core.hpp"

namespace rll {

/// Hyperparameters of the ranked list loss.
///
/// Negatives are pushed beyond `alpha`; positives are pulled inside
/// `alpha - margin`, so `alpha - margin` is the diameter of each class
/// hypersphere. `t_n` / `t_p` are the slopes of the exponential weighting of
/// mined negatives / positives, `lambda` balances the two set losses.
struct RllParams {
  double alpha = 1.2;
  double margin = 0.4;
  double t_n = 10.0;
  double t_p = 0.0;
  double lambda = 0.5;

  double positive_boundary() const { return alpha - margin; }

  void validate() const {
    if (!(margin >= 0.0) || !(margin <= alpha)) {
      fail(ErrorKind::kParameter, "require 0 <= m <= alpha (m=" + std::to_string(margin) +
                                      ", alpha=" + std::to_string(alpha) + ")");
    }
    if (!(t_n >= 0.0)) fail(ErrorKind::kParameter, "T_n must be non-negative");
    if (!std::isfinite(t_p)) fail(ErrorKind::kParameter, "T_p must be finite");
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      fail(ErrorKind::kParameter, "lambda must lie in [0, 1]");
    }
  }
};

/// The two-hyperparameter reparameterization: boundaries at 1 +/- m/2 on the
/// unit hypersphere, no positive weighting, lambda = 0.5.
inline RllParams simpler_params(double margin, double t_n) {
  if (!(margin >= 0.0 && margin <= 2.0)) {
    fail(ErrorKind::kParameter, "RLL-Simpler margin must lie in [0, 2]");
  }
  if (!(t_n >= 0.0)) fail(ErrorKind::kParameter, "T_n must be non-negative");
  return RllParams{1.0 + margin / 2.0, margin, t_n, 0.0, 0.5};
}

/// Linear temperature ramp from t1 at iteration 0 toward t2 at max_iter.
struct TemperatureSchedule {
  double t1 = 10.0;
  double t2 = 10.0;
  long max_iter = 1;
};

inline double schedule_temperature(const TemperatureSchedule& schedule, long cur_iter) {
  if (schedule.max_iter < 1) fail(ErrorKind::kParameter, "max_iter must be >= 1");
  if (cur_iter < 0 || cur_iter >= schedule.max_iter) {
    fail(ErrorKind::kRange, "iteration " + std::to_string(cur_iter) + " outside [0, " +
                                std::to_string(schedule.max_iter) + ")");
  }
  const double progress = static_cast<double>(cur_iter) / static_cast<double>(schedule.max_iter);
  return schedule.t1 - (schedule.t1 - schedule.t2) * progress;
}

/// Pairwise margin constraint for a single pair at distance `d`.
template <typename Scalar>
Scalar margin_pair_loss(Scalar d, bool same_class, const RllParams& params) {
  if (same_class) return std::max(Scalar(0), d - Scalar(params.positive_boundary()));
  return std::max(Scalar(0), Scalar(params.alpha) - d);
}

/// Non-trivial positives and negatives of one query. Boundary points are
/// excluded by strict inequalities.
template <typename Scalar>
struct MinedSets {
  Eigen::Index query_index = 0;
  std::vector<Eigen::Index> positive_indices;
  std::vector<Eigen::Index> negative_indices;
  std::vector<Scalar> positive_distances;
  std::vector<Scalar> negative_distances;
};

template <typename Derived>
MinedSets<typename Derived::Scalar> mine_sets(Eigen::Index query_index,
                                              const Eigen::MatrixBase<Derived>& distances,
                                              std::span<const int> labels,
                                              const RllParams& params) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = distances.rows();
  if (distances.cols() != n) fail(ErrorKind::kShape, "distance matrix must be square");
  check_labels(n, labels);
  if (query_index < 0 || query_index >= n) {
    fail(ErrorKind::kRange, "query index " + std::to_string(query_index) + " out of range");
  }
  const Scalar pos_boundary = Scalar(params.positive_boundary());
  const Scalar neg_boundary = Scalar(params.alpha);
  const int query_label = labels[static_cast<std::size_t>(query_index)];

  MinedSets<Scalar> mined;
  mined.query_index = query_index;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == query_index) continue;
    const Scalar d = distances(query_index, j);
    if (labels[static_cast<std::size_t>(j)] == query_label) {
      if (d > pos_boundary) {
        mined.positive_indices.push_back(j);
        mined.positive_distances.push_back(d);
      }
    } else if (d < neg_boundary) {
      mined.negative_indices.push_back(j);
      mined.negative_distances.push_back(d);
    }
  }
  return mined;
}

namespace detail {

// Normalizes exp(logits) by its sum; shifting by the max keeps exp finite and
// does not change the normalized result.
template <typename Scalar>
std::vector<Scalar> normalized_exp(std::span<const Scalar> logits) {
  const Scalar top = *std::max_element(logits.begin(), logits.end());
  std::vector<Scalar> weights(logits.size());
  Scalar total(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    weights[i] = std::exp(logits[i] - top);
    total += weights[i];
  }
  for (Scalar& w : weights) w /= total;
  return weights;
}

}  // namespace detail

/// Normalized weights exp(T_n * (alpha - d)) / sum over a non-empty mined
/// negative set. Harder (closer) negatives get larger weights when T_n > 0.
template <typename Scalar>
std::vector<Scalar> weight_negatives(std::span<const Scalar> negative_distances,
                                     const RllParams& params) {
  if (negative_distances.empty()) {
    fail(ErrorKind::kEmptySet, "cannot weight an empty negative set");
  }
  std::vector<Scalar> logits(negative_distances.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = Scalar(params.t_n) * (Scalar(params.alpha) - negative_distances[i]);
  }
  return detail::normalized_exp<Scalar>(logits);
}

/// Normalized weights exp(T_p * (d - (alpha - m))) over a non-empty mined
/// positive set. T_p > 0 emphasizes far positives, T_p < 0 near ones.
template <typename Scalar>
std::vector<Scalar> weight_positives(std::span<const Scalar> positive_distances,
                                     const RllParams& params) {
  if (positive_distances.empty()) {
    fail(ErrorKind::kEmptySet, "cannot weight an empty positive set");
  }
  std::vector<Scalar> logits(positive_distances.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = Scalar(params.t_p) * (positive_distances[i] - Scalar(params.positive_boundary()));
  }
  return detail::normalized_exp<Scalar>(logits);
}

template <typename Scalar>
Scalar loss_positive_set(const MinedSets<Scalar>& mined, const RllParams& params) {
  if (mined.positive_distances.empty()) return Scalar(0);
  const std::vector<Scalar> w = weight_positives<Scalar>(mined.positive_distances, params);
  Scalar loss(0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    loss += w[j] * margin_pair_loss(mined.positive_distances[j], true, params);
  }
  return loss;
}

template <typename Scalar>
Scalar loss_negative_set(const MinedSets<Scalar>& mined, const RllParams& params) {
  if (mined.negative_distances.empty()) return Scalar(0);
  const std::vector<Scalar> w = weight_negatives<Scalar>(mined.negative_distances, params);
  Scalar loss(0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    loss += w[k] * margin_pair_loss(mined.negative_distances[k], false, params);
  }
  return loss;
}

template <typename Scalar>
struct QueryLossBreakdown {
  Scalar loss_p = Scalar(0);
  Scalar loss_n = Scalar(0);
  Scalar loss_total = Scalar(0);
  std::size_t mined_positive_count = 0;
  std::size_t mined_negative_count = 0;
};

template <typename Scalar>
QueryLossBreakdown<Scalar> combine_set_losses(const MinedSets<Scalar>& mined,
                                              const RllParams& params) {
  QueryLossBreakdown<Scalar> out;
  out.loss_p = loss_positive_set(mined, params);
  out.loss_n = loss_negative_set(mined, params);
  out.loss_total =
      (Scalar(1) - Scalar(params.lambda)) * out.loss_p + Scalar(params.lambda) * out.loss_n;
  out.mined_positive_count = mined.positive_indices.size();
  out.mined_negative_count = mined.negative_indices.size();
  return out;
}

template <typename Derived>
QueryLossBreakdown<typename Derived::Scalar> rll_query_loss(
    Eigen::Index query_index, const Eigen::MatrixBase<Derived>& distances,
    std::span<const int> labels, const RllParams& params) {
  return combine_set_losses(mine_sets(query_index, distances, labels, params), params);
}

template <typename Scalar>
struct RllBatchLoss {
  Scalar value = Scalar(0);
  std::vector<QueryLossBreakdown<Scalar>> queries;
};

inline void check_ranking_batch(Eigen::Index rows, std::span<const int> labels) {
  check_labels(rows, labels);
  if (rows < 2) fail(ErrorKind::kConfiguration, "a ranking batch needs at least two points");
  if (count_classes(labels) < 2) {
    fail(ErrorKind::kConfiguration, "a ranking batch needs at least two classes");
  }
}

/// Mean of the per-query losses, every point acting as the query once.
/// Queries with both mined sets empty still count in the denominator.
template <typename Derived>
RllBatchLoss<typename Derived::Scalar> rll_batch_loss(const Eigen::MatrixBase<Derived>& embeddings,
                                                      std::span<const int> labels,
                                                      const RllParams& params) {
  using Scalar = typename Derived::Scalar;
  params.validate();
  const Eigen::Index n = embeddings.rows();
  check_ranking_batch(n, labels);
  const Matrix<Scalar> dist = pairwise_distances(embeddings);

  RllBatchLoss<Scalar> out;
  out.queries.reserve(static_cast<std::size_t>(n));
  Scalar total(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.queries.push_back(rll_query_loss(i, dist, labels, params));
    total += out.queries.back().loss_total;
  }
  out.value = total / Scalar(n);
  return out;
}

}  // namespace rll

#endif  // RLL_RANKED_LIST_LOSS_HPP
