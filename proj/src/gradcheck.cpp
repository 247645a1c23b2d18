#include "rll/gradcheck.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace rll {

std::vector<bool> rll_kink_rows(const MatrixXd& embeddings, const Labels& labels,
                                const RllParams& params, double margin) {
  const MatrixXd dist = pairwise_distances(embeddings);
  std::vector<bool> rows(static_cast<std::size_t>(embeddings.rows()), false);
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    for (Eigen::Index j = 0; j < embeddings.rows(); ++j) {
      if (i == j) continue;
      const double boundary =
          labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]
              ? params.positive_boundary()
              : params.alpha;
      if (std::abs(dist(i, j) - boundary) < margin || dist(i, j) < margin) {
        rows[static_cast<std::size_t>(i)] = true;
      }
    }
  }
  return rows;
}

std::vector<bool> triplet_kink_rows(const MatrixXd& embeddings, const Labels& labels,
                                    double triplet_margin, double margin) {
  const Eigen::Index n = embeddings.rows();
  std::vector<bool> rows(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || labels[i] != labels[j]) continue;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (labels[k] == labels[i]) continue;
        const double arg = (embeddings.row(i) - embeddings.row(j)).squaredNorm() + triplet_margin -
                           (embeddings.row(i) - embeddings.row(k)).squaredNorm();
        if (std::abs(arg) < margin) rows[i] = rows[j] = rows[k] = true;
      }
    }
  }
  return rows;
}

std::vector<bool> lifted_kink_rows(const MatrixXd& embeddings, const Labels& labels,
                                   double alpha, double margin) {
  const Eigen::Index n = embeddings.rows();
  const MatrixXd dist = pairwise_distances(embeddings);
  std::vector<bool> rows(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[i] != labels[j]) continue;
      double acc = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (labels[k] != labels[i]) acc += std::exp(alpha - dist(i, k)) + std::exp(alpha - dist(j, k));
      }
      if (acc > 0.0 && std::abs(dist(i, j) + std::log(acc)) < margin) {
        rows[i] = rows[j] = true;
        for (Eigen::Index k = 0; k < n; ++k) {
          if (labels[k] != labels[i]) rows[k] = true;
        }
      }
    }
  }
  return rows;
}

namespace {

MatrixXd random_unit_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return normalize_rows(m);
}

void merge(GradCheckReport& into, const GradCheckReport& other) {
  into.per_coordinate_errors.insert(into.per_coordinate_errors.end(),
                                    other.per_coordinate_errors.begin(),
                                    other.per_coordinate_errors.end());
  into.checked += other.checked;
  into.excluded += other.excluded;
  if (other.max_relative_error > into.max_relative_error) {
    into.max_relative_error = other.max_relative_error;
    into.worst_row = other.worst_row;
    into.worst_col = other.worst_col;
    into.worst_numeric = other.worst_numeric;
    into.worst_analytic = other.worst_analytic;
  }
  into.pass = into.pass && other.pass;
}

}  // namespace

GradCheckSummary run_gradcheck(LossKind loss, int trials, double tolerance, double step,
                               std::uint64_t seed) {
  if (trials < 1) fail(ErrorKind::kParameter, "need at least one trial");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_classes(2, 4);
  std::uniform_int_distribution<int> pick_per_class(2, 3);
  std::uniform_int_distribution<int> pick_dim(3, 8);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double kink_margin = 10.0 * step;

  GradCheckSummary summary;
  summary.loss = loss;
  for (int t = 0; t < trials; ++t) {
    GradCheckTrial trial;
    trial.trial = t;
    trial.classes = pick_classes(rng);
    trial.per_class = pick_per_class(rng);
    trial.dim = pick_dim(rng);
    const Eigen::Index n = static_cast<Eigen::Index>(trial.classes) * trial.per_class;
    Labels labels;
    for (int c = 0; c < trial.classes; ++c) {
      for (int k = 0; k < trial.per_class; ++k) labels.push_back(c);
    }
    const MatrixXd embeddings = random_unit_rows(n, trial.dim, rng);
    std::ostringstream desc;
    desc.precision(4);

    if (is_ranked_list(loss)) {
      RllParams params;
      if (loss == LossKind::kRllSimpler) {
        params = simpler_params(uniform(0.0, 1.2), uniform(0.0, 20.0));
      } else {
        params.alpha = uniform(0.8, 1.6);
        params.margin = uniform(0.0, params.alpha);
        params.t_n = uniform(0.0, 20.0);
        params.t_p = uniform(-10.0, 10.0);
        params.lambda = uniform(0.0, 1.0);
      }
      desc << "alpha=" << params.alpha << " m=" << params.margin << " tn=" << params.t_n
           << " tp=" << params.t_p << " lambda=" << params.lambda;
      const MatrixXd analytic = rll_batch_gradients(embeddings, labels, params);
      const FrozenRllLoss frozen(embeddings, labels, params);
      trial.report = finite_difference_check(
          [&](const Matrix<long double>& e) { return frozen(e); }, embeddings, analytic, step,
          tolerance, rll_kink_rows(embeddings, labels, params, kink_margin));
    } else {
      BaselineParams params;
      params.triplet_margin = uniform(0.1, 1.0);
      params.lifted_alpha = uniform(0.5, 1.5);
      const BaselineLoss baseline = to_baseline(loss);
      std::vector<bool> excluded;
      MatrixXd proxies;
      if (baseline == BaselineLoss::kTriplet) {
        desc << "m=" << params.triplet_margin;
        excluded = triplet_kink_rows(embeddings, labels, params.triplet_margin, 10 * kink_margin);
      } else if (baseline == BaselineLoss::kLiftedStruct) {
        desc << "alpha=" << params.lifted_alpha;
        excluded = lifted_kink_rows(embeddings, labels, params.lifted_alpha, 10 * kink_margin);
      } else if (baseline == BaselineLoss::kProxyNca) {
        // One spare proxy for a class absent from the batch.
        proxies = random_unit_rows(trial.classes + 1, trial.dim, rng);
        desc << "proxies=" << proxies.rows();
      }
      const auto analytic = baseline_gradients(embeddings, labels, baseline, params, proxies);
      const Matrix<long double> proxies_ld = proxies.cast<long double>();
      const Matrix<long double> embeddings_ld = embeddings.cast<long double>();
      trial.report = finite_difference_check(
          [&](const Matrix<long double>& e) {
            return baseline_loss(e, labels, baseline, params, proxies_ld);
          },
          embeddings, analytic.embeddings, step, tolerance, excluded);
      if (baseline == BaselineLoss::kProxyNca) {
        const GradCheckReport proxy_report = finite_difference_check(
            [&](const Matrix<long double>& p) {
              return baseline_loss(embeddings_ld, labels, baseline, params, p);
            },
            proxies, analytic.proxies, step, tolerance);
        merge(trial.report, proxy_report);
      }
    }
    trial.params = desc.str();
    if (!trial.report.pass) summary.all_pass = false;
    if (trial.report.max_relative_error > summary.worst_error || summary.worst_trial < 0) {
      summary.worst_error = std::max(summary.worst_error, trial.report.max_relative_error);
      summary.worst_trial = t;
    }
    summary.trials.push_back(std::move(trial));
  }
  return summary;
}

}  // namespace rll
