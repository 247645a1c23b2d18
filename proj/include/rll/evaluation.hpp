#ifndef RLL_EVALUATION_HPP
#define RLL_EVALUATION_HPP

#include <span>
#include <string>
#include <vector>

#include "rll/core.hpp"
#include "rll/dataset.hpp"
#include "rll/model.hpp"

namespace rll {

struct RecallReport {
  std::vector<int> ks;
  std::vector<double> recall;
  std::size_t query_count = 0;
};

/// Gallery row indices by ascending Euclidean distance to `query`, ties
/// broken by ascending index.
std::vector<Eigen::Index> rank_gallery(const VectorXd& query, const MatrixXd& gallery);

/// Fraction of queries with at least one same-class item among their K
/// nearest gallery items, for every K in `ks`.
///
/// With `self_match_excluded`, queries and gallery must be the same
/// collection (row i of both is the same point) and each query is removed
/// from its own ranked list. Throws kPrecondition when some query has no
/// possible match and kRange when a K exceeds the usable gallery size.
RecallReport recall_at_k(const MatrixXd& queries, std::span<const int> query_labels,
                         const MatrixXd& gallery, std::span<const int> gallery_labels,
                         std::span<const int> ks, bool self_match_excluded);

/// Embeds `test` and scores it against itself with self-exclusion. When
/// `train` is given, its classes must be disjoint from the test classes.
RecallReport evaluate_model(const EmbeddingModel& model, const Dataset& test,
                            std::span<const int> ks, const Dataset* train = nullptr);

std::string format_recall_table(const RecallReport& report);

/// {"query_count": N, "recall@1": r1, ...} with keys in K order.
std::string recall_report_json(const RecallReport& report);

}  // namespace rll

#endif  // RLL_EVALUATION_HPP
