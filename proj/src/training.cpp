#include "rll/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace rll {

MiniBatch sample_batch(const Dataset& dataset, int classes, int per_class, std::mt19937_64& rng) {
  if (classes < 1 || per_class < 1) {
    fail(ErrorKind::kParameter, "batch needs C >= 1 and K >= 1");
  }
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(dataset.num_classes));
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    members[static_cast<std::size_t>(dataset.labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  if (dataset.num_classes < classes) {
    fail(ErrorKind::kData, "dataset has " + std::to_string(dataset.num_classes) +
                               " classes, batch needs " + std::to_string(classes));
  }

  // Partial Fisher-Yates over the class list.
  std::vector<int> pool(static_cast<std::size_t>(dataset.num_classes));
  std::iota(pool.begin(), pool.end(), 0);
  for (int c = 0; c < classes; ++c) {
    std::uniform_int_distribution<int> pick(c, dataset.num_classes - 1);
    std::swap(pool[static_cast<std::size_t>(c)], pool[static_cast<std::size_t>(pick(rng))]);
  }

  MiniBatch batch;
  batch.classes = classes;
  batch.per_class = per_class;
  for (int c = 0; c < classes; ++c) {
    const int cls = pool[static_cast<std::size_t>(c)];
    std::vector<Eigen::Index> rows = members[static_cast<std::size_t>(cls)];
    const int available = static_cast<int>(rows.size());
    if (available >= per_class) {
      for (int k = 0; k < per_class; ++k) {
        std::uniform_int_distribution<int> pick(k, available - 1);
        std::swap(rows[static_cast<std::size_t>(k)], rows[static_cast<std::size_t>(pick(rng))]);
        batch.indices.push_back(rows[static_cast<std::size_t>(k)]);
      }
    } else {
      std::uniform_int_distribution<int> pick(0, available - 1);
      for (int k = 0; k < per_class; ++k) {
        batch.indices.push_back(rows[static_cast<std::size_t>(pick(rng))]);
      }
    }
    for (int k = 0; k < per_class; ++k) batch.labels.push_back(cls);
  }
  batch.features.resize(static_cast<Eigen::Index>(batch.indices.size()), dataset.dim());
  for (std::size_t r = 0; r < batch.indices.size(); ++r) {
    batch.features.row(static_cast<Eigen::Index>(r)) = dataset.features.row(batch.indices[r]);
  }
  return batch;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorKind::kParameter, "learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    fail(ErrorKind::kParameter, "momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) fail(ErrorKind::kParameter, "weight decay must be >= 0");
  if (max_iter < 0) fail(ErrorKind::kParameter, "iteration count must be >= 0");
  if (batch_classes < 2) fail(ErrorKind::kParameter, "a batch needs at least two classes");
  if (batch_per_class < 1) fail(ErrorKind::kParameter, "a batch needs K >= 1");
  if (embed_dim < 1) fail(ErrorKind::kParameter, "embedding dimension must be >= 1");
  if (is_ranked_list(loss.kind)) loss.rll.validate();
  if (schedule && !is_ranked_list(loss.kind)) {
    fail(ErrorKind::kConfiguration, "a temperature schedule needs an RLL loss");
  }
  if (schedule && (schedule->t1 < 0.0 || schedule->t2 < 0.0)) {
    fail(ErrorKind::kParameter, "scheduled temperatures must be non-negative");
  }
}

OptimizerState make_optimizer_state(const std::vector<MatrixXd>& parameters) {
  OptimizerState state;
  for (const MatrixXd& p : parameters) state.velocity.push_back(MatrixXd::Zero(p.rows(), p.cols()));
  return state;
}

void sgd_update(std::vector<MatrixXd>& parameters, const std::vector<MatrixXd>& gradients,
                const TrainConfig& config, OptimizerState& state) {
  if (gradients.size() != parameters.size() || state.velocity.size() != parameters.size()) {
    fail(ErrorKind::kShape, "optimizer state, gradients and parameters disagree in count");
  }
  for (std::size_t t = 0; t < parameters.size(); ++t) {
    MatrixXd& p = parameters[t];
    MatrixXd& v = state.velocity[t];
    if (gradients[t].rows() != p.rows() || gradients[t].cols() != p.cols() ||
        v.rows() != p.rows() || v.cols() != p.cols()) {
      fail(ErrorKind::kShape, "tensor " + std::to_string(t) + " has mismatched shapes");
    }
    v = config.momentum * v + gradients[t] + config.weight_decay * p;
    p -= config.learning_rate * v;
  }
}

BatchObjective batch_objective(const MatrixXd& embeddings, const Labels& labels,
                               const LossConfig& loss, const MatrixXd& raw_proxies) {
  BatchObjective out;
  if (is_ranked_list(loss.kind)) {
    out.loss = rll_batch_loss(embeddings, labels, loss.rll).value;
    out.embedding_gradient = rll_batch_gradients(embeddings, labels, loss.rll);
    return out;
  }
  const BaselineLoss baseline = to_baseline(loss.kind);
  if (baseline == BaselineLoss::kProxyNca) {
    const MatrixXd proxies = normalize_rows(raw_proxies);
    out.loss = proxy_nca_loss(embeddings, labels, proxies);
    auto grads = proxy_nca_gradients(embeddings, labels, proxies);
    out.embedding_gradient = std::move(grads.anchors);
    out.proxy_gradient = normalization_backward(raw_proxies, grads.proxies);
    return out;
  }
  out.loss = baseline_loss(embeddings, labels, baseline, loss.baseline);
  out.embedding_gradient = baseline_gradients(embeddings, labels, baseline, loss.baseline).embeddings;
  return out;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  validate_dataset(dataset);
  std::mt19937_64 rng(config.seed);

  TrainResult result;
  result.model = config.architecture == Architecture::kLinear
                     ? make_linear_model(static_cast<int>(dataset.dim()), config.embed_dim, rng)
                     : make_hidden_model(static_cast<int>(dataset.dim()), config.hidden_dim,
                                         config.embed_dim, rng);
  const bool with_proxies = config.loss.kind == LossKind::kProxyNca;
  if (with_proxies) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    std::uniform_real_distribution<double> init(-bound, bound);
    result.proxies.resize(dataset.num_classes, config.embed_dim);
    for (Eigen::Index r = 0; r < result.proxies.rows(); ++r) {
      for (Eigen::Index c = 0; c < result.proxies.cols(); ++c) result.proxies(r, c) = init(rng);
    }
  }

  std::vector<MatrixXd> params = std::move(result.model.parameters);
  if (with_proxies) params.push_back(result.proxies);
  OptimizerState state = make_optimizer_state(params);
  LossConfig loss = config.loss;

  result.loss_history.reserve(static_cast<std::size_t>(config.max_iter));
  result.temperature_history.reserve(static_cast<std::size_t>(config.max_iter));
  for (long iter = 0; iter < config.max_iter; ++iter) {
    try {
      if (config.schedule) {
        TemperatureSchedule schedule = *config.schedule;
        schedule.max_iter = config.max_iter;
        loss.rll.t_n = schedule_temperature(schedule, iter);
      }
      const MiniBatch batch =
          sample_batch(dataset, config.batch_classes, config.batch_per_class, rng);

      const std::size_t model_tensors = with_proxies ? params.size() - 1 : params.size();
      result.model.parameters.assign(params.begin(),
                                     params.begin() + static_cast<std::ptrdiff_t>(model_tensors));
      const MatrixXd embeddings = model_forward(result.model, batch.features);
      const BatchObjective objective =
          batch_objective(embeddings, batch.labels, loss,
                          with_proxies ? params.back() : MatrixXd());
      if (!std::isfinite(objective.loss) || !objective.embedding_gradient.allFinite()) {
        fail(ErrorKind::kNumerical, "loss or gradient is not finite");
      }
      std::vector<MatrixXd> grads =
          model_backward(result.model, batch.features, objective.embedding_gradient);
      if (with_proxies) grads.push_back(objective.proxy_gradient);
      sgd_update(params, grads, config, state);

      result.loss_history.push_back(objective.loss);
      result.temperature_history.push_back(is_ranked_list(loss.kind)
                                                ? loss.rll.t_n
                                                : std::numeric_limits<double>::quiet_NaN());
    } catch (const Error& e) {
      throw Error(e.kind(), "iteration " + std::to_string(iter) + ": " + e.what());
    }
  }

  if (with_proxies) {
    result.proxies = params.back();
    params.pop_back();
  }
  result.model.parameters = std::move(params);
  return result;
}

std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& config) {
  auto num = [](double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  };
  std::vector<std::pair<std::string, std::string>> out = {
      {"loss", to_string(config.loss.kind)},
      {"learning_rate", num(config.learning_rate)},
      {"momentum", num(config.momentum)},
      {"weight_decay", num(config.weight_decay)},
      {"max_iter", std::to_string(config.max_iter)},
      {"batch_classes", std::to_string(config.batch_classes)},
      {"batch_per_class", std::to_string(config.batch_per_class)},
      {"seed", std::to_string(config.seed)},
      {"architecture", to_string(config.architecture)},
      {"embed_dim", std::to_string(config.embed_dim)},
      {"hidden_dim", std::to_string(config.hidden_dim)},
  };
  if (is_ranked_list(config.loss.kind)) {
    out.emplace_back("alpha", num(config.loss.rll.alpha));
    out.emplace_back("m", num(config.loss.rll.margin));
    out.emplace_back("tn", num(config.loss.rll.t_n));
    out.emplace_back("tp", num(config.loss.rll.t_p));
    out.emplace_back("lambda", num(config.loss.rll.lambda));
    if (config.schedule) {
      out.emplace_back("t1", num(config.schedule->t1));
      out.emplace_back("t2", num(config.schedule->t2));
    }
  } else if (config.loss.kind == LossKind::kTriplet) {
    out.emplace_back("m", num(config.loss.baseline.triplet_margin));
  } else if (config.loss.kind == LossKind::kLiftedStruct) {
    out.emplace_back("alpha", num(config.loss.baseline.lifted_alpha));
  }
  return out;
}

namespace {

constexpr const char* kMagic = "rll-checkpoint";
constexpr int kVersion = 1;

void write_tensor(std::ostream& out, const std::string& name, const MatrixXd& m) {
  out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
    out << '\n';
  }
}

const std::vector<std::string>& tensor_names(Architecture arch) {
  static const std::vector<std::string> linear = {"W", "b"};
  static const std::vector<std::string> hidden = {"W1", "b1", "W2", "b2"};
  return arch == Architecture::kLinear ? linear : hidden;
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainResult& result, const TrainConfig& config) {
  const EmbeddingModel& model = result.model;
  validate_model(model);
  out << kMagic << ' ' << kVersion << '\n';
  out << "architecture " << to_string(model.architecture) << '\n';
  out << "input_dim " << model.input_dim << '\n';
  out << "hidden_dim " << model.hidden_dim << '\n';
  out << "output_dim " << model.output_dim << '\n';
  const auto cfg = describe(config);
  out << "config " << cfg.size() << '\n';
  for (const auto& [key, value] : cfg) out << key << ' ' << value << '\n';
  out << std::setprecision(17);
  const auto& names = tensor_names(model.architecture);
  const std::size_t tensors = model.parameters.size() + (result.proxies.size() > 0 ? 1 : 0);
  out << "tensors " << tensors << '\n';
  for (std::size_t t = 0; t < model.parameters.size(); ++t) {
    write_tensor(out, names[t], model.parameters[t]);
  }
  if (result.proxies.size() > 0) write_tensor(out, "proxies", result.proxies);
  out << "end\n";
}

void save_checkpoint(const std::filesystem::path& path, const TrainResult& result,
                     const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  write_checkpoint(out, result, config);
  if (!out) fail(ErrorKind::kIo, "failed while writing " + path.string());
}

namespace {

TrainConfig config_from_entries(const std::map<std::string, std::string>& entries,
                                const std::string& source) {
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };
  auto as_double = [&](const std::string& key, double fallback) {
    const std::string* v = get(key);
    if (!v) return fallback;
    try {
      return std::stod(*v);
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, source + ": bad value for " + key);
    }
  };
  TrainConfig config;
  if (const std::string* loss = get("loss")) {
    const auto kind = parse_loss_kind(*loss);
    if (!kind) fail(ErrorKind::kParse, source + ": unknown loss " + *loss);
    config.loss.kind = *kind;
  }
  config.learning_rate = as_double("learning_rate", config.learning_rate);
  config.momentum = as_double("momentum", config.momentum);
  config.weight_decay = as_double("weight_decay", config.weight_decay);
  config.max_iter = static_cast<long>(as_double("max_iter", static_cast<double>(config.max_iter)));
  config.batch_classes = static_cast<int>(as_double("batch_classes", config.batch_classes));
  config.batch_per_class = static_cast<int>(as_double("batch_per_class", config.batch_per_class));
  if (const std::string* seed = get("seed")) config.seed = std::stoull(*seed);
  if (const std::string* arch = get("architecture")) config.architecture = parse_architecture(*arch);
  config.embed_dim = static_cast<int>(as_double("embed_dim", config.embed_dim));
  config.hidden_dim = static_cast<int>(as_double("hidden_dim", config.hidden_dim));
  if (is_ranked_list(config.loss.kind)) {
    config.loss.rll.alpha = as_double("alpha", config.loss.rll.alpha);
    config.loss.rll.margin = as_double("m", config.loss.rll.margin);
    config.loss.rll.t_n = as_double("tn", config.loss.rll.t_n);
    config.loss.rll.t_p = as_double("tp", config.loss.rll.t_p);
    config.loss.rll.lambda = as_double("lambda", config.loss.rll.lambda);
    if (get("t1") && get("t2")) {
      config.schedule = TemperatureSchedule{as_double("t1", 0.0), as_double("t2", 0.0),
                                            std::max(1L, config.max_iter)};
    }
  } else if (config.loss.kind == LossKind::kTriplet) {
    config.loss.baseline.triplet_margin = as_double("m", config.loss.baseline.triplet_margin);
  } else if (config.loss.kind == LossKind::kLiftedStruct) {
    config.loss.baseline.lifted_alpha = as_double("alpha", config.loss.baseline.lifted_alpha);
  }
  return config;
}

}  // namespace

Checkpoint read_checkpoint(std::istream& in, const std::string& source_name) {
  auto bad = [&](const std::string& msg) -> void {
    fail(ErrorKind::kParse, source_name + ": " + msg);
  };
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != kMagic) bad("not an rll checkpoint");
  if (version != kVersion) bad("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  std::string arch;
  auto expect_key = [&](const char* key) {
    if (!(in >> word) || word != key) bad(std::string("expected '") + key + "'");
  };
  expect_key("architecture");
  in >> arch;
  ck.model.architecture = parse_architecture(arch);
  expect_key("input_dim");
  in >> ck.model.input_dim;
  expect_key("hidden_dim");
  in >> ck.model.hidden_dim;
  expect_key("output_dim");
  in >> ck.model.output_dim;
  expect_key("config");
  std::size_t entries = 0;
  in >> entries;
  std::map<std::string, std::string> config;
  for (std::size_t e = 0; e < entries; ++e) {
    std::string key, value;
    if (!(in >> key >> value)) bad("truncated config block");
    config[key] = value;
  }
  ck.config = config_from_entries(config, source_name);

  expect_key("tensors");
  std::size_t tensors = 0;
  in >> tensors;
  for (std::size_t t = 0; t < tensors; ++t) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    expect_key("tensor");
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) bad("bad tensor header");
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!(in >> m(r, c))) bad("truncated tensor " + name);
      }
    }
    if (name == "proxies") {
      ck.proxies = std::move(m);
    } else {
      ck.model.parameters.push_back(std::move(m));
    }
  }
  expect_key("end");
  if (!in) bad("truncated checkpoint");
  validate_model(ck.model);
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace rll
