#include "rll/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace rll {

std::vector<Eigen::Index> rank_gallery(const VectorXd& query, const MatrixXd& gallery) {
  if (gallery.rows() == 0) fail(ErrorKind::kShape, "gallery is empty");
  if (gallery.cols() != query.size()) {
    fail(ErrorKind::kShape, "query dimension does not match gallery dimension");
  }
  std::vector<double> dist(static_cast<std::size_t>(gallery.rows()));
  for (Eigen::Index j = 0; j < gallery.rows(); ++j) {
    dist[static_cast<std::size_t>(j)] = euclidean(gallery.row(j), query.transpose());
  }
  std::vector<Eigen::Index> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
  });
  return order;
}

RecallReport recall_at_k(const MatrixXd& queries, std::span<const int> query_labels,
                         const MatrixXd& gallery, std::span<const int> gallery_labels,
                         std::span<const int> ks, bool self_match_excluded) {
  check_labels(queries.rows(), query_labels);
  check_labels(gallery.rows(), gallery_labels);
  if (queries.rows() == 0) fail(ErrorKind::kPrecondition, "no queries to evaluate");
  if (gallery.rows() == 0) fail(ErrorKind::kShape, "gallery is empty");
  if (queries.cols() != gallery.cols()) {
    fail(ErrorKind::kShape, "query and gallery dimensions differ");
  }
  if (self_match_excluded && queries.rows() != gallery.rows()) {
    fail(ErrorKind::kShape, "self-exclusion needs queries and gallery to be one collection");
  }
  if (ks.empty()) fail(ErrorKind::kParameter, "no K values requested");
  const Eigen::Index usable = gallery.rows() - (self_match_excluded ? 1 : 0);
  for (int k : ks) {
    if (k < 1 || k > usable) {
      fail(ErrorKind::kRange, "K=" + std::to_string(k) + " outside [1, " + std::to_string(usable) +
                                  "] for this gallery");
    }
  }

  // Rank (0-based, after self-exclusion) of the first same-class item.
  std::vector<Eigen::Index> first_hit(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const auto order = rank_gallery(queries.row(q).transpose(), gallery);
    Eigen::Index rank = 0;
    Eigen::Index hit = -1;
    for (Eigen::Index g : order) {
      if (self_match_excluded && g == q) continue;
      if (gallery_labels[static_cast<std::size_t>(g)] == query_labels[static_cast<std::size_t>(q)]) {
        hit = rank;
        break;
      }
      ++rank;
    }
    if (hit < 0) {
      fail(ErrorKind::kPrecondition,
           "query " + std::to_string(q) + " (class " +
               std::to_string(query_labels[static_cast<std::size_t>(q)]) +
               ") has no same-class item in the gallery");
    }
    first_hit[static_cast<std::size_t>(q)] = hit;
  }

  RecallReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.query_count = static_cast<std::size_t>(queries.rows());
  for (int k : ks) {
    const auto hits = std::count_if(first_hit.begin(), first_hit.end(),
                                    [k](Eigen::Index rank) { return rank < k; });
    report.recall.push_back(static_cast<double>(hits) / static_cast<double>(queries.rows()));
  }
  return report;
}

RecallReport evaluate_model(const EmbeddingModel& model, const Dataset& test,
                            std::span<const int> ks, const Dataset* train) {
  if (train) check_disjoint_classes(*train, test);
  const MatrixXd embedded = model_forward(model, test.features);
  return recall_at_k(embedded, test.labels, embedded, test.labels, ks, true);
}

std::string format_recall_table(const RecallReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "K" << "Recall@K\n";
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    out << std::left << std::setw(10) << report.ks[i] << report.recall[i] << '\n';
  }
  out << "queries: " << report.query_count << '\n';
  return out.str();
}

std::string recall_report_json(const RecallReport& report) {
  nlohmann::ordered_json doc;
  doc["query_count"] = report.query_count;
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    doc["recall@" + std::to_string(report.ks[i])] = report.recall[i];
  }
  return doc.dump(2) + "\n";
}

}  // namespace rll
