#ifndef RLL_DATASET_HPP
#define RLL_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>

#include "rll/core.hpp"

namespace rll {

struct EmbeddingModel;

enum class Split { kTrain, kTest, kUnknown };

const char* to_string(Split split);

/// Feature rows with integer class labels.
///
/// Class ids are contiguous from 0 within a split. `class_offset` places the
/// split's classes in the id space of the generation call that produced it
/// (global id = offset + local id); it is -1 when unknown, e.g. for files
/// without a metadata header.
struct Dataset {
  MatrixXd features;
  Labels labels;
  Split split = Split::kUnknown;
  int num_classes = 0;
  int class_offset = -1;
  std::string provenance;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

/// Throws kData when labels are negative or not contiguous from 0, kShape
/// when label and row counts differ.
void validate_dataset(const Dataset& dataset);

/// Throws kData when both splits carry class offsets and their global
/// class-id ranges intersect. Splits without offsets are not checked.
void check_disjoint_classes(const Dataset& a, const Dataset& b);

struct SynthSpec {
  int num_classes_train = 10;
  int num_classes_test = 10;
  int per_class = 20;
  int input_dim = 32;
  // Smallest distance between any two class centers, in units of the
  // within-class standard deviation (which is 1).
  double class_separation = 4.0;
  bool mixing = true;
  std::uint64_t seed = 7;
  // Dimension of the subspace that carries the class centers; the remaining
  // coordinates are pure within-class noise.
  int signal_dim = 4;

  void validate() const;
};

/// Gaussian class clusters with disjoint train/test classes.
///
/// Centers are spread greedily in a `signal_dim`-dimensional subspace and
/// scaled so the closest pair is `class_separation` apart, then shifted off
/// the origin along one further coordinate so that L2 normalization keeps
/// the constellation intact. Points are center + N(0, I). With `mixing`, one
/// random orthogonal matrix rotates every point of both splits.
std::pair<Dataset, Dataset> generate_synthetic(const SynthSpec& spec);

/// Comma-separated rows "class_id,feat_0,...,feat_{D-1}". An optional first
/// line starting with '#' carries "key=value" metadata.
Dataset parse_dataset(std::istream& in, const std::string& source_name);
Dataset load_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Writes the embedded dataset in the load_dataset() format.
void export_embeddings(const EmbeddingModel& model, const Dataset& dataset,
                       const std::filesystem::path& path);

}  // namespace rll

#endif  // RLL_DATASET_HPP
