#include "rll/model.hpp"

#include <cmath>

namespace rll {

const char* to_string(Architecture arch) {
  return arch == Architecture::kLinear ? "linear" : "hidden";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "linear") return Architecture::kLinear;
  if (name == "hidden") return Architecture::kHidden;
  fail(ErrorKind::kParameter, "unknown architecture '" + name + "' (expected linear|hidden)");
}

namespace {

MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatrixXd m(rows, cols);
  // Row-major fill order so the draw sequence does not depend on storage.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

void check_dims(int input_dim, int output_dim) {
  if (input_dim < 1 || output_dim < 1) {
    fail(ErrorKind::kParameter, "model dimensions must be positive");
  }
}

}  // namespace

EmbeddingModel make_linear_model(int input_dim, int output_dim, std::mt19937_64& rng) {
  check_dims(input_dim, output_dim);
  EmbeddingModel model{Architecture::kLinear, input_dim, 0, output_dim, {}};
  model.parameters.push_back(uniform_matrix(output_dim, input_dim, input_dim, rng));
  model.parameters.push_back(uniform_matrix(output_dim, 1, input_dim, rng));
  return model;
}

EmbeddingModel make_hidden_model(int input_dim, int hidden_dim, int output_dim,
                                 std::mt19937_64& rng) {
  check_dims(input_dim, output_dim);
  if (hidden_dim < 1) fail(ErrorKind::kParameter, "hidden dimension must be positive");
  EmbeddingModel model{Architecture::kHidden, input_dim, hidden_dim, output_dim, {}};
  model.parameters.push_back(uniform_matrix(hidden_dim, input_dim, input_dim, rng));
  model.parameters.push_back(uniform_matrix(hidden_dim, 1, input_dim, rng));
  model.parameters.push_back(uniform_matrix(output_dim, hidden_dim, hidden_dim, rng));
  model.parameters.push_back(uniform_matrix(output_dim, 1, hidden_dim, rng));
  return model;
}

EmbeddingModel make_identity_model(int dim) {
  check_dims(dim, dim);
  return EmbeddingModel{Architecture::kLinear, dim, 0, dim,
                        {MatrixXd::Identity(dim, dim), MatrixXd::Zero(dim, 1)}};
}

void validate_model(const EmbeddingModel& model) {
  auto expect = [&](std::size_t slot, Eigen::Index rows, Eigen::Index cols) {
    const MatrixXd& p = model.parameters[slot];
    if (p.rows() != rows || p.cols() != cols) {
      fail(ErrorKind::kShape, "parameter " + std::to_string(slot) + " is " +
                                  std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                                  ", expected " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
    }
  };
  if (model.architecture == Architecture::kLinear) {
    if (model.parameters.size() != 2) fail(ErrorKind::kShape, "linear model needs 2 tensors");
    expect(0, model.output_dim, model.input_dim);
    expect(1, model.output_dim, 1);
  } else {
    if (model.parameters.size() != 4) fail(ErrorKind::kShape, "hidden model needs 4 tensors");
    expect(0, model.hidden_dim, model.input_dim);
    expect(1, model.hidden_dim, 1);
    expect(2, model.output_dim, model.hidden_dim);
    expect(3, model.output_dim, 1);
  }
}

namespace {

void check_inputs(const EmbeddingModel& model, const MatrixXd& inputs) {
  if (inputs.cols() != model.input_dim) {
    fail(ErrorKind::kShape, "input dimension " + std::to_string(inputs.cols()) +
                                " does not match model input " +
                                std::to_string(model.input_dim));
  }
}

MatrixXd affine(const MatrixXd& x, const MatrixXd& w, const MatrixXd& b) {
  return (x * w.transpose()).rowwise() + b.col(0).transpose();
}

}  // namespace

MatrixXd model_preactivations(const EmbeddingModel& model, const MatrixXd& inputs) {
  check_inputs(model, inputs);
  const auto& p = model.parameters;
  if (model.architecture == Architecture::kLinear) return affine(inputs, p[0], p[1]);
  const MatrixXd hidden = affine(inputs, p[0], p[1]).array().tanh().matrix();
  return affine(hidden, p[2], p[3]);
}

MatrixXd model_forward(const EmbeddingModel& model, const MatrixXd& inputs) {
  return normalize_rows(model_preactivations(model, inputs));
}

MatrixXd normalization_backward(const MatrixXd& preactivations, const MatrixXd& upstream) {
  if (upstream.rows() != preactivations.rows() || upstream.cols() != preactivations.cols()) {
    fail(ErrorKind::kShape, "upstream gradient shape does not match the model output");
  }
  MatrixXd out(upstream.rows(), upstream.cols());
  for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
    const double norm = preactivations.row(i).norm();
    if (!(norm > kNormEpsilon)) {
      fail(ErrorKind::kDegenerateInput, "row " + std::to_string(i) + " has a degenerate output");
    }
    const Eigen::RowVectorXd u = preactivations.row(i) / norm;
    out.row(i) = (upstream.row(i) - upstream.row(i).dot(u) * u) / norm;
  }
  return out;
}

std::vector<MatrixXd> model_backward(const EmbeddingModel& model, const MatrixXd& inputs,
                                     const MatrixXd& upstream) {
  check_inputs(model, inputs);
  if (upstream.rows() != inputs.rows() || upstream.cols() != model.output_dim) {
    fail(ErrorKind::kShape, "upstream gradient must be N x output_dim");
  }
  const auto& p = model.parameters;
  if (model.architecture == Architecture::kLinear) {
    const MatrixXd dz = normalization_backward(affine(inputs, p[0], p[1]), upstream);
    return {dz.transpose() * inputs, dz.colwise().sum().transpose()};
  }
  const MatrixXd hidden = affine(inputs, p[0], p[1]).array().tanh().matrix();
  const MatrixXd dz = normalization_backward(affine(hidden, p[2], p[3]), upstream);
  const MatrixXd dhidden =
      ((dz * p[2]).array() * (1.0 - hidden.array().square())).matrix();
  return {dhidden.transpose() * inputs, dhidden.colwise().sum().transpose(),
          dz.transpose() * hidden, dz.colwise().sum().transpose()};
}

}  // namespace rll
