#ifndef RLL_BASELINE_LOSSES_HPP
#define RLL_BASELINE_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rll/core.hpp"

// Ranking-motivated structured losses used as baselines. README lists the
// conventions that matter when comparing numbers with other implementations
// (unsquared Lifted Struct hinge, normalized N-pair embeddings, positive-free
// Proxy-NCA denominator).

namespace rll {

/// Mean over every (anchor, positive, negative) triplet in the batch of
/// [d_ap^2 + margin - d_an^2]_+.
template <typename Derived>
typename Derived::Scalar triplet_loss(const Eigen::MatrixBase<Derived>& embeddings,
                                      std::span<const int> labels, double margin) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = embeddings.rows();
  check_labels(n, labels);
  Scalar total(0);
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || labels[i] != labels[j]) continue;
      const Scalar d_ap = (embeddings.row(i) - embeddings.row(j)).squaredNorm();
      for (Eigen::Index k = 0; k < n; ++k) {
        if (labels[k] == labels[i]) continue;
        const Scalar d_an = (embeddings.row(i) - embeddings.row(k)).squaredNorm();
        total += std::max(Scalar(0), d_ap + Scalar(margin) - d_an);
        ++count;
      }
    }
  }
  if (count == 0) fail(ErrorKind::kConfiguration, "batch contains no valid triplet");
  return total / Scalar(count);
}

/// (anchor, positive) row pairs for N-pair-mc: the first two occurrences of
/// each class, in order of first appearance. Points beyond the second of a
/// class are not used.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> npair_pairs(std::span<const int> labels) {
  std::vector<int> order;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  std::vector<int> seen_count;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(order.begin(), order.end(), labels[i]);
    const std::size_t slot = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) {
      order.push_back(labels[i]);
      seen_count.push_back(0);
      pairs.emplace_back(static_cast<Eigen::Index>(i), -1);
    } else if (seen_count[slot] == 1) {
      pairs[slot].second = static_cast<Eigen::Index>(i);
    }
    ++seen_count[slot];
  }
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    if (pairs[c].second < 0) {
      fail(ErrorKind::kConfiguration,
           "class " + std::to_string(order[c]) + " has fewer than two points for N-pair-mc");
    }
  }
  return pairs;
}

inline void check_npair_classes(std::span<const int> class_ids) {
  if (class_ids.size() < 2) fail(ErrorKind::kConfiguration, "N-pair-mc needs N >= 2 pairs");
  std::set<int> unique(class_ids.begin(), class_ids.end());
  if (unique.size() != class_ids.size()) {
    fail(ErrorKind::kConfiguration, "N-pair-mc pairs must come from distinct classes");
  }
}

/// (1/N) sum_i log(1 + sum_{j != i} exp(a_i.p_j - a_i.p_i)) over N
/// (anchor, positive) pairs from N distinct classes.
template <typename DerivedA, typename DerivedP>
typename DerivedA::Scalar npair_mc_loss(const Eigen::MatrixBase<DerivedA>& anchors,
                                        const Eigen::MatrixBase<DerivedP>& positives,
                                        std::span<const int> class_ids) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index n = anchors.rows();
  if (positives.rows() != n || positives.cols() != anchors.cols()) {
    fail(ErrorKind::kShape, "anchors and positives must have identical shapes");
  }
  check_labels(n, class_ids);
  check_npair_classes(class_ids);
  const Matrix<Scalar> sim = anchors * positives.transpose();
  Scalar total(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    // log(1 + sum exp(s_j)) as a log-sum-exp over {0, s_j}.
    Scalar top(0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) top = std::max(top, sim(i, j) - sim(i, i));
    }
    Scalar acc = std::exp(-top);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) acc += std::exp(sim(i, j) - sim(i, i) - top);
    }
    total += top + std::log(acc);
  }
  return total / Scalar(n);
}

/// N-pair-mc over a class-balanced batch, using npair_pairs() for pairing.
template <typename Derived>
typename Derived::Scalar npair_mc_loss(const Eigen::MatrixBase<Derived>& embeddings,
                                       std::span<const int> labels) {
  using Scalar = typename Derived::Scalar;
  check_labels(embeddings.rows(), labels);
  const auto pairs = npair_pairs(labels);
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Matrix<Scalar> anchors(n, embeddings.cols());
  Matrix<Scalar> positives(n, embeddings.cols());
  std::vector<int> ids(pairs.size());
  for (Eigen::Index c = 0; c < n; ++c) {
    anchors.row(c) = embeddings.row(pairs[c].first);
    positives.row(c) = embeddings.row(pairs[c].second);
    ids[c] = labels[pairs[c].first];
  }
  return npair_mc_loss(anchors, positives, ids);
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(std::span<const Scalar> values) {
  const Scalar top = *std::max_element(values.begin(), values.end());
  Scalar acc(0);
  for (Scalar v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

}  // namespace detail

/// Lifted structured loss as (1 / 2|P|) sum over unordered positive pairs
/// (i, j) of [d_ij + log(sum_k exp(alpha - d_ik) + sum_l exp(alpha - d_jl))]_+,
/// with k, l ranging over the negatives of i and j. The hinge is not squared.
template <typename Derived>
typename Derived::Scalar lifted_struct_loss(const Eigen::MatrixBase<Derived>& embeddings,
                                            std::span<const int> labels, double alpha) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = embeddings.rows();
  check_labels(n, labels);
  const Matrix<Scalar> dist = pairwise_distances(embeddings);
  Scalar total(0);
  std::size_t pair_count = 0;
  std::vector<Scalar> exponents;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[i] != labels[j]) continue;
      exponents.clear();
      for (Eigen::Index k = 0; k < n; ++k) {
        if (labels[k] != labels[i]) exponents.push_back(Scalar(alpha) - dist(i, k));
      }
      for (Eigen::Index l = 0; l < n; ++l) {
        if (labels[l] != labels[j]) exponents.push_back(Scalar(alpha) - dist(j, l));
      }
      if (exponents.empty()) {
        fail(ErrorKind::kConfiguration, "Lifted Struct needs a negative for every positive pair");
      }
      total += std::max(Scalar(0), dist(i, j) + detail::log_sum_exp<Scalar>(exponents));
      ++pair_count;
    }
  }
  if (pair_count == 0) fail(ErrorKind::kConfiguration, "batch contains no positive pair");
  return total / (Scalar(2) * Scalar(pair_count));
}

inline void check_proxies(Eigen::Index proxy_count, Eigen::Index proxy_dim, Eigen::Index dim,
                          std::span<const int> labels) {
  if (proxy_dim != dim) {
    fail(ErrorKind::kShape, "proxy dimension " + std::to_string(proxy_dim) +
                                " does not match embedding dimension " + std::to_string(dim));
  }
  if (proxy_count < 2) fail(ErrorKind::kConfiguration, "Proxy-NCA needs at least two proxies");
  for (int label : labels) {
    if (label < 0 || label >= proxy_count) {
      fail(ErrorKind::kConfiguration, "no proxy for class " + std::to_string(label));
    }
  }
}

/// Mean over anchors of -log(exp(-d(a, p_y)) / sum_{z != y} exp(-d(a, p_z)))
/// with one static proxy per class (row `class_id` of `proxies`). The
/// positive proxy is not in the denominator, so the value can be negative.
template <typename DerivedE, typename DerivedP>
typename DerivedE::Scalar proxy_nca_loss(const Eigen::MatrixBase<DerivedE>& anchors,
                                         std::span<const int> labels,
                                         const Eigen::MatrixBase<DerivedP>& proxies) {
  using Scalar = typename DerivedE::Scalar;
  const Eigen::Index n = anchors.rows();
  check_labels(n, labels);
  check_proxies(proxies.rows(), proxies.cols(), anchors.cols(), labels);
  if (n == 0) fail(ErrorKind::kConfiguration, "Proxy-NCA needs at least one anchor");
  Scalar total(0);
  std::vector<Scalar> neg;
  for (Eigen::Index a = 0; a < n; ++a) {
    const int y = labels[a];
    neg.clear();
    for (Eigen::Index z = 0; z < proxies.rows(); ++z) {
      if (z != y) neg.push_back(-euclidean(anchors.row(a), proxies.row(z)));
    }
    total += euclidean(anchors.row(a), proxies.row(y)) + detail::log_sum_exp<Scalar>(neg);
  }
  return total / Scalar(n);
}

}  // namespace rll

#endif  // RLL_BASELINE_LOSSES_HPP
