#include "rll/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "rll/model.hpp"

namespace rll {

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kUnknown: break;
  }
  return "unknown";
}

void validate_dataset(const Dataset& dataset) {
  check_labels(dataset.features.rows(), dataset.labels);
  std::vector<bool> present;
  for (int label : dataset.labels) {
    if (label < 0) fail(ErrorKind::kData, "negative class id " + std::to_string(label));
    if (static_cast<std::size_t>(label) >= present.size()) present.resize(label + 1, false);
    present[label] = true;
  }
  const auto gap = std::find(present.begin(), present.end(), false);
  if (gap != present.end()) {
    fail(ErrorKind::kData, "class ids must be contiguous from 0; class " +
                               std::to_string(gap - present.begin()) + " is missing");
  }
  if (!dataset.features.allFinite()) fail(ErrorKind::kData, "dataset contains non-finite values");
}

void check_disjoint_classes(const Dataset& a, const Dataset& b) {
  if (a.class_offset < 0 || b.class_offset < 0) return;
  const int a_end = a.class_offset + a.num_classes;
  const int b_end = b.class_offset + b.num_classes;
  if (a.class_offset < b_end && b.class_offset < a_end) {
    fail(ErrorKind::kData, "train and test class ranges overlap");
  }
}

void SynthSpec::validate() const {
  if (num_classes_train < 1 || num_classes_test < 1 || per_class < 1 || input_dim < 1 ||
      signal_dim < 1) {
    fail(ErrorKind::kParameter, "synthetic counts and dimensions must be >= 1");
  }
  if (!(class_separation > 0.0) || !std::isfinite(class_separation)) {
    fail(ErrorKind::kParameter, "class separation must be positive");
  }
  // One coordinate beyond the signal subspace carries the offset.
  if (input_dim >= 2 && signal_dim >= input_dim) {
    fail(ErrorKind::kParameter, "signal_dim must be smaller than the input dimension");
  }
}

namespace {

// Greedy spread: each new center is the candidate that maximizes its
// distance to the chosen centers, with a mild pull toward the origin to keep
// the constellation compact.
MatrixXd spread_centers(int count, int dim, std::mt19937_64& rng) {
  constexpr int kCandidates = 64;
  constexpr double kCompactness = 0.3;
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd centers(count, dim);
  for (int c = 0; c < count; ++c) {
    double best_score = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < kCandidates; ++t) {
      VectorXd cand(dim);
      for (int k = 0; k < dim; ++k) cand(k) = normal(rng);
      double nearest = std::numeric_limits<double>::infinity();
      for (int prev = 0; prev < c; ++prev) {
        nearest = std::min(nearest, (centers.row(prev).transpose() - cand).norm());
      }
      const double score = c == 0 ? -cand.norm() : nearest - kCompactness * cand.norm();
      if (score > best_score) {
        best_score = score;
        centers.row(c) = cand.transpose();
      }
    }
  }
  centers.rowwise() -= centers.colwise().mean();
  return centers;
}

MatrixXd random_orthogonal(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd g(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(dim, dim);
  const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c) {
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

}  // namespace

std::pair<Dataset, Dataset> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int total_classes = spec.num_classes_train + spec.num_classes_test;
  const int dim = spec.input_dim;
  const bool has_offset_axis = dim >= 2;
  const int signal = std::min(spec.signal_dim, has_offset_axis ? dim - 1 : dim);

  MatrixXd spread = spread_centers(total_classes, signal, rng);
  double closest = std::numeric_limits<double>::infinity();
  for (int a = 0; a < total_classes; ++a) {
    for (int b = a + 1; b < total_classes; ++b) {
      closest = std::min(closest, (spread.row(a) - spread.row(b)).norm());
    }
  }
  if (std::isfinite(closest) && closest > 0.0) spread *= spec.class_separation / closest;

  MatrixXd centers = MatrixXd::Zero(total_classes, dim);
  centers.leftCols(signal) = spread;
  if (has_offset_axis) {
    const double radius = spread.rowwise().norm().maxCoeff();
    centers.col(signal).setConstant(radius > 0.0 ? 2.0 * radius : spec.class_separation);
  }

  std::vector<int> order(static_cast<std::size_t>(total_classes));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  auto make_split = [&](Split split, int first, int count) {
    Dataset out;
    out.split = split;
    out.num_classes = count;
    out.class_offset = first;
    out.features.resize(static_cast<Eigen::Index>(count) * spec.per_class, dim);
    out.labels.reserve(static_cast<std::size_t>(count * spec.per_class));
    Eigen::Index row = 0;
    for (int local = 0; local < count; ++local) {
      const int cls = order[static_cast<std::size_t>(first + local)];
      for (int p = 0; p < spec.per_class; ++p, ++row) {
        for (int k = 0; k < dim; ++k) out.features(row, k) = centers(cls, k) + normal(rng);
        out.labels.push_back(local);
      }
    }
    std::ostringstream note;
    note << "synthetic;seed=" << spec.seed << ";sep=" << spec.class_separation
         << ";signal_dim=" << signal << ";mixing=" << (spec.mixing ? 1 : 0);
    out.provenance = note.str();
    return out;
  };
  Dataset train = make_split(Split::kTrain, 0, spec.num_classes_train);
  Dataset test = make_split(Split::kTest, spec.num_classes_train, spec.num_classes_test);

  if (spec.mixing) {
    const MatrixXd q = random_orthogonal(dim, rng);
    train.features = train.features * q.transpose();
    test.features = test.features * q.transpose();
  }
  return {std::move(train), std::move(test)};
}

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& msg) {
  fail(ErrorKind::kParse, source + ":" + std::to_string(line) + ": " + msg);
}

void apply_metadata(Dataset& out, const std::string& header) {
  std::istringstream tokens(header.substr(1));
  std::string token;
  while (tokens >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "split") {
      out.split = value == "train" ? Split::kTrain : value == "test" ? Split::kTest : Split::kUnknown;
    } else if (key == "class_offset") {
      int offset = -1;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), offset);
      if (ec == std::errc() && ptr == value.data() + value.size()) out.class_offset = offset;
    } else if (key == "provenance") {
      out.provenance = value;
    }
  }
}

}  // namespace

Dataset parse_dataset(std::istream& in, const std::string& source_name) {
  Dataset out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      if (line_no == 1) apply_metadata(out, text);
      continue;
    }
    std::vector<double> values;
    std::size_t start = 0;
    bool first = true;
    int label = 0;
    while (true) {
      const auto comma = text.find(',', start);
      const std::string field =
          trim(std::string_view(text).substr(start, comma == std::string::npos ? std::string::npos
                                                                               : comma - start));
      if (first) {
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), label);
        if (ec != std::errc() || ptr != field.data() + field.size() || label < 0) {
          parse_error(source_name, line_no, "invalid class id '" + field + "'");
        }
        first = false;
      } else {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(field, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (field.empty() || used != field.size() || !std::isfinite(v)) {
          parse_error(source_name, line_no, "invalid number '" + field + "'");
        }
        values.push_back(v);
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (values.empty()) parse_error(source_name, line_no, "row has no features");
    if (dim < 0) dim = static_cast<Eigen::Index>(values.size());
    if (static_cast<Eigen::Index>(values.size()) != dim) {
      fail(ErrorKind::kShape, source_name + ":" + std::to_string(line_no) + ": row has " +
                                  std::to_string(values.size()) + " features, expected " +
                                  std::to_string(dim));
    }
    out.labels.push_back(label);
    rows.push_back(std::move(values));
  }
  if (rows.empty()) fail(ErrorKind::kData, source_name + ": dataset is empty");
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) out.features(static_cast<Eigen::Index>(r), c) = rows[r][c];
  }
  out.num_classes = count_classes(out.labels);
  validate_dataset(out);
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return parse_dataset(in, path.string());
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  out << "# split=" << to_string(dataset.split) << " classes=" << dataset.num_classes
      << " dim=" << dataset.dim() << " class_offset=" << dataset.class_offset;
  if (!dataset.provenance.empty()) {
    std::string note = dataset.provenance;
    std::replace(note.begin(), note.end(), ' ', ';');
    out << " provenance=" << note;
  }
  out << '\n';
  out << std::setprecision(9);
  for (Eigen::Index r = 0; r < dataset.size(); ++r) {
    out << dataset.labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < dataset.dim(); ++c) out << ',' << dataset.features(r, c);
    out << '\n';
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  write_dataset(out, dataset);
  if (!out) fail(ErrorKind::kIo, "failed while writing " + path.string());
}

void export_embeddings(const EmbeddingModel& model, const Dataset& dataset,
                       const std::filesystem::path& path) {
  Dataset embedded = dataset;
  embedded.features = dataset.size() == 0 ? MatrixXd(0, model.output_dim)
                                          : model_forward(model, dataset.features);
  embedded.provenance = "embedding of " + (dataset.provenance.empty() ? std::string("dataset")
                                                                      : dataset.provenance);
  save_dataset(embedded, path);
}

}  // namespace rll
