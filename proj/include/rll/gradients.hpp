#ifndef RLL_GRADIENTS_HPP
#define RLL_GRADIENTS_HPP

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rll/baseline_losses.hpp"
#include "rll/core.hpp"
#include "rll/ranked_list_loss.hpp"

namespace rll {

namespace detail {

// Unit direction from b to a; zero when the points coincide (the
// subgradient of the norm at the origin that central differences see).
template <typename Scalar, typename DerivedA, typename DerivedB>
Vector<Scalar> unit_difference(const Eigen::MatrixBase<DerivedA>& a,
                               const Eigen::MatrixBase<DerivedB>& b, Scalar d) {
  if (d > Scalar(0)) return ((a - b) / d).transpose();
  return Vector<Scalar>::Zero(a.size());
}

}  // namespace detail

/// Gradient of one query's ranked-list loss (1 - lambda) L_P + lambda L_N with
/// respect to the query embedding. Within the list the gallery embeddings,
/// the mined sets and the exponential weights are constants:
///   (1 - lambda) sum_j w_ij (f_i - f_j) / d_ij - lambda sum_k w_ik (f_i - f_k) / d_ik.
/// Throws kSingularPair when an active pair has zero distance.
template <typename Derived, typename DerivedD>
Vector<typename Derived::Scalar> rll_query_gradient(Eigen::Index query_index,
                                                    const Eigen::MatrixBase<Derived>& embeddings,
                                                    const Eigen::MatrixBase<DerivedD>& distances,
                                                    std::span<const int> labels,
                                                    const RllParams& params) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index i = query_index;
  const MinedSets<Scalar> mined = mine_sets(i, distances, labels, params);
  Vector<Scalar> grad = Vector<Scalar>::Zero(embeddings.cols());
  auto singular = [&](Eigen::Index j) {
    fail(ErrorKind::kSingularPair, "points " + std::to_string(i) + " and " + std::to_string(j) +
                                       " coincide on an active pair");
  };
  const Scalar pos_scale = Scalar(1) - Scalar(params.lambda);
  const Scalar neg_scale = Scalar(params.lambda);
  if (!mined.positive_indices.empty()) {
    const auto w = weight_positives<Scalar>(mined.positive_distances, params);
    for (std::size_t t = 0; t < w.size(); ++t) {
      const Eigen::Index j = mined.positive_indices[t];
      const Scalar d = mined.positive_distances[t];
      if (!(d > Scalar(0))) singular(j);
      grad += (pos_scale * w[t] / d) * (embeddings.row(i) - embeddings.row(j)).transpose();
    }
  }
  if (!mined.negative_indices.empty()) {
    const auto w = weight_negatives<Scalar>(mined.negative_distances, params);
    for (std::size_t t = 0; t < w.size(); ++t) {
      const Eigen::Index k = mined.negative_indices[t];
      const Scalar d = mined.negative_distances[t];
      if (!(d > Scalar(0))) singular(k);
      grad -= (neg_scale * w[t] / d) * (embeddings.row(i) - embeddings.row(k)).transpose();
    }
  }
  return grad;
}

/// Gradient of rll_batch_loss() under the per-query stop-gradient contract:
/// row i is rll_query_gradient(i) / N, since f_i only receives gradient from
/// its own ranked list.
template <typename Derived>
Matrix<typename Derived::Scalar> rll_batch_gradients(const Eigen::MatrixBase<Derived>& embeddings,
                                                     std::span<const int> labels,
                                                     const RllParams& params) {
  using Scalar = typename Derived::Scalar;
  params.validate();
  const Eigen::Index n = embeddings.rows();
  check_ranking_batch(n, labels);
  const Matrix<Scalar> dist = pairwise_distances(embeddings);
  Matrix<Scalar> grad(n, embeddings.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    grad.row(i) = rll_query_gradient(i, embeddings, dist, labels, params).transpose() / Scalar(n);
  }
  return grad;
}

/// The batch loss with mined sets, weights and gallery embeddings frozen at a
/// base point; only the query row of each ranked list varies. Its exact
/// gradient at the base point is rll_batch_gradients(), which makes it the
/// finite-difference reference for the stop-gradient contract.
class FrozenRllLoss {
 public:
  FrozenRllLoss(const MatrixXd& base, std::span<const int> labels, const RllParams& params)
      : base_(base.cast<long double>()), params_(params) {
    params.validate();
    check_ranking_batch(base.rows(), labels);
    const MatrixXd dist = pairwise_distances(base);
    for (Eigen::Index i = 0; i < base.rows(); ++i) {
      const MinedSets<double> mined = mine_sets(i, dist, labels, params);
      if (!mined.positive_indices.empty()) {
        const auto w = weight_positives<double>(mined.positive_distances, params);
        for (std::size_t t = 0; t < w.size(); ++t) {
          terms_.push_back({i, mined.positive_indices[t], (1.0 - params.lambda) * w[t], true});
        }
      }
      if (!mined.negative_indices.empty()) {
        const auto w = weight_negatives<double>(mined.negative_distances, params);
        for (std::size_t t = 0; t < w.size(); ++t) {
          terms_.push_back({i, mined.negative_indices[t], params.lambda * w[t], false});
        }
      }
    }
  }

  template <typename Scalar>
  Scalar operator()(const Matrix<Scalar>& embeddings) const {
    const Matrix<Scalar> gallery = base_.cast<Scalar>();
    Scalar total(0);
    for (const Term& term : terms_) {
      const Scalar d = euclidean(embeddings.row(term.query), gallery.row(term.other));
      total += Scalar(term.weight) * margin_pair_loss(d, term.positive, params_);
    }
    return total / Scalar(base_.rows());
  }

 private:
  struct Term {
    Eigen::Index query;
    Eigen::Index other;
    double weight;
    bool positive;
  };
  Matrix<long double> base_;
  RllParams params_;
  std::vector<Term> terms_;
};

/// Exact gradient of triplet_loss() with respect to every embedding.
template <typename Derived>
Matrix<typename Derived::Scalar> triplet_gradients(const Eigen::MatrixBase<Derived>& embeddings,
                                                   std::span<const int> labels, double margin) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = embeddings.rows();
  check_labels(n, labels);
  std::size_t count = 0;
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(n, embeddings.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || labels[i] != labels[j]) continue;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (labels[k] == labels[i]) continue;
        ++count;
        const auto diff_ap = embeddings.row(i) - embeddings.row(j);
        const auto diff_an = embeddings.row(i) - embeddings.row(k);
        if (diff_ap.squaredNorm() + Scalar(margin) - diff_an.squaredNorm() <= Scalar(0)) continue;
        grad.row(i) += Scalar(2) * (diff_ap - diff_an);
        grad.row(j) -= Scalar(2) * diff_ap;
        grad.row(k) += Scalar(2) * diff_an;
      }
    }
  }
  if (count == 0) fail(ErrorKind::kConfiguration, "batch contains no valid triplet");
  return grad / Scalar(count);
}

template <typename Scalar>
struct PairGradients {
  Matrix<Scalar> anchors;
  Matrix<Scalar> positives;
};

/// Exact gradient of npair_mc_loss() with respect to anchors and positives.
template <typename DerivedA, typename DerivedP>
PairGradients<typename DerivedA::Scalar> npair_mc_gradients(
    const Eigen::MatrixBase<DerivedA>& anchors, const Eigen::MatrixBase<DerivedP>& positives,
    std::span<const int> class_ids) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index n = anchors.rows();
  if (positives.rows() != n || positives.cols() != anchors.cols()) {
    fail(ErrorKind::kShape, "anchors and positives must have identical shapes");
  }
  check_labels(n, class_ids);
  check_npair_classes(class_ids);
  const Matrix<Scalar> sim = anchors * positives.transpose();
  PairGradients<Scalar> out{Matrix<Scalar>::Zero(n, anchors.cols()),
                            Matrix<Scalar>::Zero(n, anchors.cols())};
  const Scalar inv_n = Scalar(1) / Scalar(n);
  std::vector<Scalar> prob(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar top(0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) top = std::max(top, sim(i, j) - sim(i, i));
    }
    Scalar denom = std::exp(-top);
    for (Eigen::Index j = 0; j < n; ++j) {
      prob[j] = j == i ? Scalar(0) : std::exp(sim(i, j) - sim(i, i) - top);
      denom += prob[j];
    }
    Scalar mass(0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Scalar p = prob[j] / denom;
      mass += p;
      out.anchors.row(i) += inv_n * p * (positives.row(j) - positives.row(i));
      out.positives.row(j) += inv_n * p * anchors.row(i);
    }
    out.positives.row(i) -= inv_n * mass * anchors.row(i);
  }
  return out;
}

/// Exact gradient of lifted_struct_loss(). Coincident points contribute the
/// zero subgradient of the distance.
template <typename Derived>
Matrix<typename Derived::Scalar> lifted_struct_gradients(
    const Eigen::MatrixBase<Derived>& embeddings, std::span<const int> labels, double alpha) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = embeddings.rows();
  check_labels(n, labels);
  const Matrix<Scalar> dist = pairwise_distances(embeddings);

  struct Edge {
    Eigen::Index from;
    Eigen::Index to;
  };
  std::vector<std::pair<Eigen::Index, Eigen::Index>> positive_pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) positive_pairs.emplace_back(i, j);
    }
  }
  if (positive_pairs.empty()) fail(ErrorKind::kConfiguration, "batch contains no positive pair");
  const Scalar scale = Scalar(1) / (Scalar(2) * Scalar(positive_pairs.size()));

  Matrix<Scalar> grad = Matrix<Scalar>::Zero(n, embeddings.cols());
  std::vector<Edge> edges;
  std::vector<Scalar> exponents;
  for (const auto& [i, j] : positive_pairs) {
    edges.clear();
    exponents.clear();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (labels[k] != labels[i]) {
        edges.push_back({i, k});
        exponents.push_back(Scalar(alpha) - dist(i, k));
      }
    }
    for (Eigen::Index l = 0; l < n; ++l) {
      if (labels[l] != labels[j]) {
        edges.push_back({j, l});
        exponents.push_back(Scalar(alpha) - dist(j, l));
      }
    }
    if (exponents.empty()) {
      fail(ErrorKind::kConfiguration, "Lifted Struct needs a negative for every positive pair");
    }
    const Scalar lse = detail::log_sum_exp<Scalar>(exponents);
    if (dist(i, j) + lse <= Scalar(0)) continue;

    const Vector<Scalar> u_ij =
        detail::unit_difference(embeddings.row(i), embeddings.row(j), dist(i, j));
    grad.row(i) += scale * u_ij.transpose();
    grad.row(j) -= scale * u_ij.transpose();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const Scalar share = scale * std::exp(exponents[e] - lse);
      const Eigen::Index a = edges[e].from;
      const Eigen::Index b = edges[e].to;
      const Vector<Scalar> u =
          detail::unit_difference(embeddings.row(a), embeddings.row(b), dist(a, b));
      grad.row(a) -= share * u.transpose();
      grad.row(b) += share * u.transpose();
    }
  }
  return grad;
}

template <typename Scalar>
struct ProxyGradients {
  Matrix<Scalar> anchors;
  Matrix<Scalar> proxies;
};

/// Exact gradient of proxy_nca_loss() with respect to anchors and proxies.
template <typename DerivedE, typename DerivedP>
ProxyGradients<typename DerivedE::Scalar> proxy_nca_gradients(
    const Eigen::MatrixBase<DerivedE>& anchors, std::span<const int> labels,
    const Eigen::MatrixBase<DerivedP>& proxies) {
  using Scalar = typename DerivedE::Scalar;
  const Eigen::Index n = anchors.rows();
  check_labels(n, labels);
  check_proxies(proxies.rows(), proxies.cols(), anchors.cols(), labels);
  if (n == 0) fail(ErrorKind::kConfiguration, "Proxy-NCA needs at least one anchor");
  ProxyGradients<Scalar> out{Matrix<Scalar>::Zero(n, anchors.cols()),
                             Matrix<Scalar>::Zero(proxies.rows(), proxies.cols())};
  const Scalar inv_n = Scalar(1) / Scalar(n);
  std::vector<Scalar> neg;
  for (Eigen::Index a = 0; a < n; ++a) {
    const int y = labels[a];
    const Scalar d_pos = euclidean(anchors.row(a), proxies.row(y));
    const Vector<Scalar> u_pos = detail::unit_difference(anchors.row(a), proxies.row(y), d_pos);
    out.anchors.row(a) += inv_n * u_pos.transpose();
    out.proxies.row(y) -= inv_n * u_pos.transpose();

    neg.clear();
    for (Eigen::Index z = 0; z < proxies.rows(); ++z) {
      if (z != y) neg.push_back(-euclidean(anchors.row(a), proxies.row(z)));
    }
    const Scalar lse = detail::log_sum_exp<Scalar>(neg);
    std::size_t slot = 0;
    for (Eigen::Index z = 0; z < proxies.rows(); ++z) {
      if (z == y) continue;
      const Scalar d = -neg[slot];
      const Scalar share = inv_n * std::exp(neg[slot] - lse);
      ++slot;
      const Vector<Scalar> u = detail::unit_difference(anchors.row(a), proxies.row(z), d);
      out.anchors.row(a) -= share * u.transpose();
      out.proxies.row(z) += share * u.transpose();
    }
  }
  return out;
}

enum class BaselineLoss { kTriplet, kNPairMc, kLiftedStruct, kProxyNca };

inline const char* to_string(BaselineLoss loss) {
  switch (loss) {
    case BaselineLoss::kTriplet: return "triplet";
    case BaselineLoss::kNPairMc: return "npair";
    case BaselineLoss::kLiftedStruct: return "lifted";
    case BaselineLoss::kProxyNca: return "proxy-nca";
  }
  return "?";
}

struct BaselineParams {
  double triplet_margin = 0.4;
  double lifted_alpha = 1.2;
};

/// Gradient of a baseline loss over a labeled batch. `proxies` is only read
/// (and only has a gradient) for Proxy-NCA.
template <typename Scalar>
struct BaselineGradients {
  Matrix<Scalar> embeddings;
  Matrix<Scalar> proxies;
};

template <typename Scalar>
Scalar baseline_loss(const Matrix<Scalar>& embeddings, std::span<const int> labels,
                     BaselineLoss loss, const BaselineParams& params,
                     const Matrix<Scalar>& proxies = Matrix<Scalar>()) {
  switch (loss) {
    case BaselineLoss::kTriplet: return triplet_loss(embeddings, labels, params.triplet_margin);
    case BaselineLoss::kNPairMc: return npair_mc_loss(embeddings, labels);
    case BaselineLoss::kLiftedStruct:
      return lifted_struct_loss(embeddings, labels, params.lifted_alpha);
    case BaselineLoss::kProxyNca: return proxy_nca_loss(embeddings, labels, proxies);
  }
  fail(ErrorKind::kConfiguration, "unknown baseline loss");
}

template <typename Scalar>
BaselineGradients<Scalar> baseline_gradients(const Matrix<Scalar>& embeddings,
                                             std::span<const int> labels, BaselineLoss loss,
                                             const BaselineParams& params,
                                             const Matrix<Scalar>& proxies = Matrix<Scalar>()) {
  BaselineGradients<Scalar> out;
  switch (loss) {
    case BaselineLoss::kTriplet:
      out.embeddings = triplet_gradients(embeddings, labels, params.triplet_margin);
      return out;
    case BaselineLoss::kLiftedStruct:
      out.embeddings = lifted_struct_gradients(embeddings, labels, params.lifted_alpha);
      return out;
    case BaselineLoss::kNPairMc: {
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
      const auto pair_grad = npair_mc_gradients(anchors, positives, ids);
      out.embeddings = Matrix<Scalar>::Zero(embeddings.rows(), embeddings.cols());
      for (Eigen::Index c = 0; c < n; ++c) {
        out.embeddings.row(pairs[c].first) += pair_grad.anchors.row(c);
        out.embeddings.row(pairs[c].second) += pair_grad.positives.row(c);
      }
      return out;
    }
    case BaselineLoss::kProxyNca: {
      auto grads = proxy_nca_gradients(embeddings, labels, proxies);
      out.embeddings = std::move(grads.anchors);
      out.proxies = std::move(grads.proxies);
      return out;
    }
  }
  fail(ErrorKind::kConfiguration, "unknown baseline loss");
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  // One entry per coordinate in column-major order; NaN marks an excluded
  // coordinate.
  std::vector<double> per_coordinate_errors;
  bool pass = true;
  Eigen::Index worst_row = -1;
  Eigen::Index worst_col = -1;
  double worst_numeric = 0.0;
  double worst_analytic = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
};

inline double relative_error(double numeric, double analytic) {
  return std::abs(numeric - analytic) / std::max(1e-8, std::abs(numeric) + std::abs(analytic));
}

/// Central-difference check of `analytic` against `loss_fn` around `point`.
///
/// `loss_fn` is called with a Matrix<long double>, which keeps cancellation
/// in (f(x+h) - f(x-h)) well below the tolerance. Rows flagged in
/// `excluded_rows` (kink-adjacent) are skipped. Throws kNumerical when a
/// probe evaluates to a non-finite value.
template <typename LossFn>
GradCheckReport finite_difference_check(LossFn&& loss_fn, const MatrixXd& point,
                                        const MatrixXd& analytic, double step, double tolerance,
                                        const std::vector<bool>& excluded_rows = {}) {
  if (!(step > 0.0)) fail(ErrorKind::kParameter, "finite-difference step must be positive");
  if (analytic.rows() != point.rows() || analytic.cols() != point.cols()) {
    fail(ErrorKind::kShape, "analytic gradient shape does not match the probed point");
  }
  GradCheckReport report;
  report.per_coordinate_errors.assign(static_cast<std::size_t>(point.size()),
                                      std::numeric_limits<double>::quiet_NaN());
  Matrix<long double> probe = point.cast<long double>();
  const long double h = step;
  for (Eigen::Index c = 0; c < point.cols(); ++c) {
    for (Eigen::Index r = 0; r < point.rows(); ++r) {
      if (!excluded_rows.empty() && excluded_rows[static_cast<std::size_t>(r)]) {
        ++report.excluded;
        continue;
      }
      const long double saved = probe(r, c);
      probe(r, c) = saved + h;
      const long double plus = loss_fn(probe);
      probe(r, c) = saved - h;
      const long double minus = loss_fn(probe);
      probe(r, c) = saved;
      if (!std::isfinite(static_cast<double>(plus)) || !std::isfinite(static_cast<double>(minus))) {
        fail(ErrorKind::kNumerical, "loss is not finite under perturbation of (" +
                                        std::to_string(r) + ", " + std::to_string(c) + ")");
      }
      const double numeric = static_cast<double>((plus - minus) / (2.0L * h));
      const double err = relative_error(numeric, analytic(r, c));
      report.per_coordinate_errors[static_cast<std::size_t>(c * point.rows() + r)] = err;
      ++report.checked;
      if (err > report.max_relative_error || report.worst_row < 0) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_row = r;
        report.worst_col = c;
        report.worst_numeric = numeric;
        report.worst_analytic = analytic(r, c);
      }
    }
  }
  report.pass = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace rll

#endif  // RLL_GRADIENTS_HPP
