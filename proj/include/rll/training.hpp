#ifndef RLL_TRAINING_HPP
#define RLL_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rll/dataset.hpp"
#include "rll/loss_kind.hpp"
#include "rll/model.hpp"

namespace rll {

/// One C-way / K-shot episode: N = C * K feature rows, each class exactly K
/// times.
struct MiniBatch {
  std::vector<Eigen::Index> indices;  // rows of the source dataset
  MatrixXd features;
  Labels labels;
  int classes = 0;
  int per_class = 0;

  Eigen::Index size() const { return features.rows(); }
};

/// Draws C classes uniformly without replacement, then K points per class
/// (without replacement when the class has at least K points, with
/// replacement otherwise). Throws kData when the dataset has fewer than C
/// classes.
MiniBatch sample_batch(const Dataset& dataset, int classes, int per_class, std::mt19937_64& rng);

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 2e-5;
  long max_iter = 2000;
  int batch_classes = 8;
  int batch_per_class = 3;
  std::uint64_t seed = 1;
  LossConfig loss;
  // When set, T_n follows the linear ramp t1 -> t2 over max_iter iterations.
  std::optional<TemperatureSchedule> schedule;
  Architecture architecture = Architecture::kLinear;
  int embed_dim = 8;
  int hidden_dim = 32;

  void validate() const;
};

struct OptimizerState {
  std::vector<MatrixXd> velocity;
};

OptimizerState make_optimizer_state(const std::vector<MatrixXd>& parameters);

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
void sgd_update(std::vector<MatrixXd>& parameters, const std::vector<MatrixXd>& gradients,
                const TrainConfig& config, OptimizerState& state);

struct TrainResult {
  EmbeddingModel model;
  // Raw (unnormalized) class proxies; only trained for Proxy-NCA.
  MatrixXd proxies;
  std::vector<double> loss_history;
  // T_n used at each iteration (NaN for losses without T_n).
  std::vector<double> temperature_history;
};

/// Loss value and embedding gradient of one batch under `loss`. For
/// Proxy-NCA `raw_proxies` are normalized before use and `proxy_gradient`
/// receives the gradient with respect to the raw values.
struct BatchObjective {
  double loss = 0.0;
  MatrixXd embedding_gradient;
  MatrixXd proxy_gradient;
};

BatchObjective batch_objective(const MatrixXd& embeddings, const Labels& labels,
                               const LossConfig& loss, const MatrixXd& raw_proxies);

/// Runs max_iter iterations of sample -> forward -> loss -> gradient ->
/// update. Fully determined by (dataset, config).
TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// Text checkpoint; see README for the layout.
void write_checkpoint(std::ostream& out, const TrainResult& result, const TrainConfig& config);
void save_checkpoint(const std::filesystem::path& path, const TrainResult& result,
                     const TrainConfig& config);

struct Checkpoint {
  EmbeddingModel model;
  MatrixXd proxies;
  TrainConfig config;
};

Checkpoint read_checkpoint(std::istream& in, const std::string& source_name);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Resolved configuration as "key = value" lines, used for echoing runs and
/// for the checkpoint config block.
std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& config);

}  // namespace rll

#endif  // RLL_TRAINING_HPP
