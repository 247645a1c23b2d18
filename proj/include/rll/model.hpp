#ifndef RLL_MODEL_HPP
#define RLL_MODEL_HPP

#include <random>
#include <string>
#include <vector>

#include "rll/core.hpp"

namespace rll {

enum class Architecture { kLinear, kHidden };

const char* to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

/// Embedding function: an affine map (optionally preceded by a tanh hidden
/// layer) followed by L2 normalization.
///
/// Parameter layout, weights stored output x input:
///   linear: {W (out x in), b (out x 1)}
///   hidden: {W1 (hidden x in), b1 (hidden x 1), W2 (out x hidden), b2 (out x 1)}
struct EmbeddingModel {
  Architecture architecture = Architecture::kLinear;
  int input_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;
  std::vector<MatrixXd> parameters;
};

/// Weights and offsets uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
EmbeddingModel make_linear_model(int input_dim, int output_dim, std::mt19937_64& rng);
EmbeddingModel make_hidden_model(int input_dim, int hidden_dim, int output_dim,
                                 std::mt19937_64& rng);
/// Linear model with W = I and b = 0.
EmbeddingModel make_identity_model(int dim);

/// Checks parameter count and shapes against the declared dimensions.
void validate_model(const EmbeddingModel& model);

/// Pre-normalization outputs z, one row per input row.
MatrixXd model_preactivations(const EmbeddingModel& model, const MatrixXd& inputs);

/// Unit-norm embeddings, one row per input row. Throws kDegenerateInput when
/// a pre-normalization output has norm <= 1e-12.
MatrixXd model_forward(const EmbeddingModel& model, const MatrixXd& inputs);

/// Parameter gradients of loss(model_forward(inputs)) given
/// upstream = dloss/d(embeddings). Same layout as `model.parameters`.
std::vector<MatrixXd> model_backward(const EmbeddingModel& model, const MatrixXd& inputs,
                                     const MatrixXd& upstream);

/// Backpropagates through row-wise normalization u = z / |z|:
/// dz = (I - u u^T) du / |z|.
MatrixXd normalization_backward(const MatrixXd& preactivations, const MatrixXd& upstream);

}  // namespace rll

#endif  // RLL_MODEL_HPP
