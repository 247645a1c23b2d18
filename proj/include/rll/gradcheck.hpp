#ifndef RLL_GRADCHECK_HPP
#define RLL_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rll/gradients.hpp"
#include "rll/loss_kind.hpp"

namespace rll {

/// Rows whose pairs sit within `margin` of an RLL hinge boundary
/// (alpha - m for positives, alpha for negatives). Central differences across
/// a kink do not estimate either one-sided derivative, so these rows are
/// skipped.
std::vector<bool> rll_kink_rows(const MatrixXd& embeddings, const Labels& labels,
                                const RllParams& params, double margin);

/// Rows involved in a triplet whose hinge argument lies within `margin` of 0.
std::vector<bool> triplet_kink_rows(const MatrixXd& embeddings, const Labels& labels,
                                    double triplet_margin, double margin);

/// Rows involved in a Lifted Struct term whose hinge argument lies within
/// `margin` of 0.
std::vector<bool> lifted_kink_rows(const MatrixXd& embeddings, const Labels& labels,
                                   double alpha, double margin);

struct GradCheckTrial {
  int trial = 0;
  int classes = 0;
  int per_class = 0;
  int dim = 0;
  std::string params;
  GradCheckReport report;
};

struct GradCheckSummary {
  LossKind loss = LossKind::kRll;
  std::vector<GradCheckTrial> trials;
  bool all_pass = true;
  double worst_error = 0.0;
  int worst_trial = -1;
};

/// Checks analytic gradients against central finite differences on `trials`
/// random configurations (C in {2,3,4}, K in {2,3}, D in [3, 8], unit-norm
/// embeddings, random loss parameters). RLL is compared against the frozen
/// loss, baselines against the plain loss; Proxy-NCA also checks the proxy
/// gradient. Rows within 10 * step of a kink are excluded.
GradCheckSummary run_gradcheck(LossKind loss, int trials, double tolerance, double step,
                               std::uint64_t seed);

}  // namespace rll

#endif  // RLL_GRADCHECK_HPP
