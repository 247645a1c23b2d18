#ifndef RLL_CORE_HPP
#define RLL_CORE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rll/error.hpp"

namespace rll {

// Points are stored one per row: an N x D matrix holds N embeddings of
// dimension D.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

using Labels = std::vector<int>;

inline constexpr double kNormEpsilon = 1e-12;

/// Scales `v` to unit L2 norm. Throws kDegenerateInput when the norm is at or
/// below 1e-12 instead of dividing by it.
template <typename Derived>
Vector<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) fail(ErrorKind::kDegenerateInput, "cannot normalize an empty vector");
  const Scalar norm = v.norm();
  if (!(norm > Scalar(kNormEpsilon))) {
    fail(ErrorKind::kDegenerateInput, "cannot normalize a vector with norm <= 1e-12");
  }
  return Vector<Scalar>(v.reshaped()) / norm;
}

/// Row-wise version of l2_normalize.
template <typename Derived>
Matrix<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& points) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(points.rows(), points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Scalar norm = points.row(i).norm();
    if (!(norm > Scalar(kNormEpsilon))) {
      fail(ErrorKind::kDegenerateInput,
           "row " + std::to_string(i) + " has norm <= 1e-12 and cannot be normalized");
    }
    out.row(i) = points.row(i) / norm;
  }
  return out;
}

/// Euclidean distance between two rows/vectors, computed from the squared
/// difference and clamped at zero before the square root.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclidean(const Eigen::MatrixBase<DerivedA>& a,
                                    const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar sq = (a - b).squaredNorm();
  return std::sqrt(sq > Scalar(0) ? sq : Scalar(0));
}

/// N x N matrix of Euclidean distances between the rows of `points`.
/// Exactly symmetric with an exactly zero diagonal.
template <typename Derived>
Matrix<typename Derived::Scalar> pairwise_distances(const Eigen::MatrixBase<Derived>& points) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = points.rows();
  if (n < 1) fail(ErrorKind::kShape, "pairwise_distances needs at least one point");
  Matrix<Scalar> dist = Matrix<Scalar>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Scalar d = euclidean(points.row(i), points.row(j));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

/// Overload for a list of separately stored vectors; all must share one
/// dimension.
template <typename Scalar>
Matrix<Scalar> pairwise_distances(std::span<const Vector<Scalar>> points) {
  if (points.empty()) fail(ErrorKind::kShape, "pairwise_distances needs at least one point");
  const Eigen::Index dim = points.front().size();
  Matrix<Scalar> stacked(static_cast<Eigen::Index>(points.size()), dim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim) {
      fail(ErrorKind::kShape, "point " + std::to_string(i) + " has dimension " +
                                  std::to_string(points[i].size()) + ", expected " +
                                  std::to_string(dim));
    }
    stacked.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return pairwise_distances(stacked);
}

inline void check_labels(Eigen::Index rows, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    fail(ErrorKind::kShape, "label count " + std::to_string(labels.size()) +
                                " does not match point count " + std::to_string(rows));
  }
}

inline int count_classes(std::span<const int> labels) {
  std::vector<int> seen(labels.begin(), labels.end());
  std::sort(seen.begin(), seen.end());
  return static_cast<int>(std::unique(seen.begin(), seen.end()) - seen.begin());
}

}  // namespace rll

#endif  // RLL_CORE_HPP
