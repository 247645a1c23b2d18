#include "rll/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rll/dataset.hpp"
#include "rll/evaluation.hpp"
#include "rll/gradcheck.hpp"
#include "rll/training.hpp"

namespace rll {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kParameter:
    case ErrorKind::kConfiguration:
    case ErrorKind::kRange:
      return kExitUsage;
    case ErrorKind::kDegenerateInput:
    case ErrorKind::kNumerical:
    case ErrorKind::kSingularPair:
      return kExitNumerical;
    case ErrorKind::kShape:
    case ErrorKind::kEmptySet:
    case ErrorKind::kParse:
    case ErrorKind::kData:
    case ErrorKind::kPrecondition:
    case ErrorKind::kIo:
      return kExitData;
  }
  return kExitData;
}

namespace {

[[noreturn]] void usage(const std::string& msg) { fail(ErrorKind::kUsage, msg); }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty()) usage("empty entry in list '" + text + "'");
    out.push_back(item);
  }
  if (out.empty()) usage("empty list");
  return out;
}

double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !std::isfinite(v)) usage("not a number: '" + text + "'");
  return v;
}

int parse_int(const std::string& text) {
  const double v = parse_number(text);
  if (v != std::floor(v) || std::abs(v) > 1e9) usage("not an integer: '" + text + "'");
  return static_cast<int>(v);
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  for (const auto& item : split_list(text)) ks.push_back(parse_int(item));
  return ks;
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

void echo(std::ostream& out, const std::string& command,
          const std::vector<std::pair<std::string, std::string>>& entries) {
  out << "[" << command << " configuration]\n";
  for (const auto& [key, value] : entries) out << "  " << key << " = " << value << '\n';
  out << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::kIo, "failed while writing " + path.string());
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthSpec spec;
  bool no_mixing = false;
  std::string out_dir;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--classes", a.spec.num_classes_train, "training classes");
  app.add_option("--test-classes", a.spec.num_classes_test, "test classes");
  app.add_option("--per-class", a.spec.per_class, "points per class");
  app.add_option("--dim", a.spec.input_dim, "feature dimension");
  app.add_option("--sep", a.spec.class_separation, "closest center distance / within-class std");
  app.add_option("--signal-dim", a.spec.signal_dim, "dimension of the class-center subspace");
  app.add_option("--seed", a.spec.seed, "generator seed");
  app.add_flag("--no-mixing", a.no_mixing, "skip the random orthogonal scramble");
  app.add_option("--out", a.out_dir, "output directory")->required();
}

int run_synth(SynthArgs& a, std::ostream& out) {
  a.spec.mixing = !a.no_mixing;
  echo(out, "synth",
       {{"classes", std::to_string(a.spec.num_classes_train)},
        {"test_classes", std::to_string(a.spec.num_classes_test)},
        {"per_class", std::to_string(a.spec.per_class)},
        {"dim", std::to_string(a.spec.input_dim)},
        {"sep", num(a.spec.class_separation)},
        {"signal_dim", std::to_string(a.spec.signal_dim)},
        {"mixing", a.spec.mixing ? "on" : "off"},
        {"seed", std::to_string(a.spec.seed)},
        {"out", a.out_dir}});
  const auto [train, test] = generate_synthetic(a.spec);
  std::error_code ec;
  std::filesystem::create_directories(a.out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + a.out_dir + ": " + ec.message());
  const auto dir = std::filesystem::path(a.out_dir);
  save_dataset(train, dir / "train.csv");
  save_dataset(test, dir / "test.csv");
  out << "wrote " << (dir / "train.csv").string() << " (" << train.size() << " points)\n";
  out << "wrote " << (dir / "test.csv").string() << " (" << test.size() << " points)\n";
  return kExitOk;
}

// ------------------------------------------------------- training flags

struct TrainFlags {
  std::string loss = "rll-simpler";
  double m = 0.4, tn = 10.0, alpha = 1.2, tp = 0.0, lambda = 0.5, t1 = 0.0, t2 = 0.0;
  int classes = 8, per_class = 3, embed_dim = 8, hidden_dim = 32;
  long iters = 2000;
  double lr = 1e-2, momentum = 0.9, weight_decay = 2e-5;
  std::uint64_t seed = 1;
  std::string arch = "linear";
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_train_flags(CLI::App& app, TrainFlags& f, bool with_loss_choice) {
  if (with_loss_choice) {
    f.opts["loss"] = app.add_option("--loss", f.loss,
                                    "rll | rll-simpler | triplet | npair | lifted | proxy-nca");
  }
  f.opts["m"] = app.add_option("--m", f.m, "margin m");
  f.opts["tn"] = app.add_option("--tn", f.tn, "negative weighting temperature T_n");
  f.opts["alpha"] = app.add_option("--alpha", f.alpha, "negative boundary alpha");
  f.opts["tp"] = app.add_option("--tp", f.tp, "positive weighting temperature T_p");
  f.opts["lambda"] = app.add_option("--lambda", f.lambda, "positive/negative balance");
  f.opts["t1"] = app.add_option("--t1", f.t1, "initial T_n of the linear schedule");
  f.opts["t2"] = app.add_option("--t2", f.t2, "final T_n of the linear schedule");
  app.add_option("--classes", f.classes, "classes per batch (C)");
  app.add_option("--per-class", f.per_class, "points per class in a batch (K)");
  app.add_option("--iters", f.iters, "training iterations");
  app.add_option("--lr", f.lr, "learning rate");
  app.add_option("--momentum", f.momentum, "SGD momentum");
  app.add_option("--weight-decay", f.weight_decay, "L2 weight decay");
  app.add_option("--seed", f.seed, "training seed");
  app.add_option("--embed-dim", f.embed_dim, "embedding dimension");
  app.add_option("--arch", f.arch, "linear | hidden");
  app.add_option("--hidden-dim", f.hidden_dim, "hidden width for --arch hidden");
}

TrainConfig resolve_train_config(const TrainFlags& f) {
  const auto kind = parse_loss_kind(f.loss);
  if (!kind) usage("unknown loss '" + f.loss + "'");
  std::vector<std::string> allowed;
  switch (*kind) {
    case LossKind::kRll: allowed = {"alpha", "m", "tn", "tp", "lambda", "t1", "t2"}; break;
    case LossKind::kRllSimpler: allowed = {"m", "tn", "t1", "t2"}; break;
    case LossKind::kTriplet: allowed = {"m"}; break;
    case LossKind::kLiftedStruct: allowed = {"alpha"}; break;
    case LossKind::kNPairMc:
    case LossKind::kProxyNca: break;
  }
  for (const char* name : {"alpha", "m", "tn", "tp", "lambda", "t1", "t2"}) {
    if (f.given(name) && std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
      usage(std::string("--") + name + " is not a parameter of loss " + f.loss);
    }
  }
  if (f.given("t1") != f.given("t2")) usage("--t1 and --t2 must be given together");
  if (f.given("t1") && f.given("tn")) usage("--tn conflicts with a --t1/--t2 schedule");

  TrainConfig config;
  config.loss.kind = *kind;
  if (*kind == LossKind::kRllSimpler) {
    config.loss.rll = simpler_params(f.m, f.tn);
  } else if (*kind == LossKind::kRll) {
    config.loss.rll = RllParams{f.alpha, f.m, f.tn, f.tp, f.lambda};
  }
  config.loss.baseline.triplet_margin = f.m;
  config.loss.baseline.lifted_alpha = f.alpha;
  if (f.given("t1")) {
    config.schedule = TemperatureSchedule{f.t1, f.t2, std::max(1L, f.iters)};
    config.loss.rll.t_n = f.t1;
  }
  config.batch_classes = f.classes;
  config.batch_per_class = f.per_class;
  config.max_iter = f.iters;
  config.learning_rate = f.lr;
  config.momentum = f.momentum;
  config.weight_decay = f.weight_decay;
  config.seed = f.seed;
  config.embed_dim = f.embed_dim;
  config.hidden_dim = f.hidden_dim;
  config.architecture = parse_architecture(f.arch);
  config.validate();
  return config;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  TrainFlags flags;
  std::string data;
  std::string out_path;
  std::string loss_log;
};

void add_train(CLI::App& app, TrainArgs& a) {
  add_train_flags(app, a.flags, true);
  app.add_option("--data", a.data, "training dataset file")->required();
  app.add_option("--out", a.out_path, "checkpoint path")->required();
  app.add_option("--loss-log", a.loss_log, "per-iteration loss CSV (default <out>.loss.csv)");
}

int run_train(TrainArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_train_config(a.flags);
  const std::string log_path = a.loss_log.empty() ? a.out_path + ".loss.csv" : a.loss_log;
  auto entries = describe(config);
  entries.emplace_back("data", a.data);
  entries.emplace_back("out", a.out_path);
  entries.emplace_back("loss_log", log_path);
  echo(out, "train", entries);

  const Dataset data = load_dataset(a.data);
  const TrainResult result = train(data, config);
  save_checkpoint(a.out_path, result, config);

  std::ostringstream log;
  log << std::setprecision(10) << "iteration,loss,tn\n";
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    log << i << ',' << result.loss_history[i] << ',';
    if (!std::isnan(result.temperature_history[i])) log << result.temperature_history[i];
    log << '\n';
  }
  write_text(log_path, log.str());

  if (!result.loss_history.empty()) {
    const auto& h = result.loss_history;
    const auto& t = result.temperature_history;
    out << "iterations: " << h.size() << '\n';
    out << "loss first/last: " << num(h.front()) << " / " << num(h.back()) << '\n';
    if (!std::isnan(t.front())) {
      out << "T_n first/last: " << num(t.front()) << " / " << num(t.back()) << '\n';
    }
  }
  out << "wrote " << a.out_path << " and " << log_path << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string data;
  std::string train_data;
  std::string ks = "1,2,4,8";
  std::string report;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  app.add_option("--model", a.model, "checkpoint path")->required();
  app.add_option("--data", a.data, "test dataset file")->required();
  app.add_option("--train", a.train_data, "training dataset, checked for class disjointness");
  app.add_option("--ks", a.ks, "comma-separated K values");
  app.add_option("--report", a.report, "machine-readable report path (JSON)");
}

int run_eval(EvalArgs& a, std::ostream& out) {
  const std::vector<int> ks = parse_ks(a.ks);
  echo(out, "eval", {{"model", a.model}, {"data", a.data}, {"ks", a.ks},
                     {"report", a.report.empty() ? "-" : a.report}});
  const Checkpoint ck = load_checkpoint(a.model);
  const Dataset test = load_dataset(a.data);
  std::optional<Dataset> train_split;
  if (!a.train_data.empty()) train_split = load_dataset(a.train_data);
  const RecallReport report =
      evaluate_model(ck.model, test, ks, train_split ? &*train_split : nullptr);
  out << format_recall_table(report);
  if (!a.report.empty()) write_text(a.report, recall_report_json(report));
  return kExitOk;
}

// ------------------------------------------------------------ gradcheck

struct GradcheckArgs {
  std::string loss = "all";
  int trials = 50;
  double tol = 1e-5;
  double step = 1e-6;
  std::uint64_t seed = 3;
  std::string report;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a) {
  app.add_option("--loss", a.loss, "loss to check, or 'all'");
  app.add_option("--trials", a.trials, "random configurations per loss");
  app.add_option("--tol", a.tol, "maximum relative error");
  app.add_option("--step", a.step, "central-difference step");
  app.add_option("--seed", a.seed, "configuration seed");
  app.add_option("--report", a.report, "machine-readable report path (JSON)");
}

int run_gradcheck_cmd(GradcheckArgs& a, std::ostream& out) {
  std::vector<LossKind> losses;
  if (a.loss == "all") {
    losses.assign(kAllLosses.begin(), kAllLosses.end());
  } else if (const auto kind = parse_loss_kind(a.loss)) {
    losses.push_back(*kind);
  } else {
    usage("unknown loss '" + a.loss + "'");
  }
  if (!(a.tol >= 0.0)) usage("--tol must be >= 0");
  echo(out, "gradcheck",
       {{"loss", a.loss}, {"trials", std::to_string(a.trials)}, {"tol", num(a.tol)},
        {"step", num(a.step)}, {"seed", std::to_string(a.seed)}});

  bool all_pass = true;
  nlohmann::ordered_json doc;
  for (LossKind loss : losses) {
    const GradCheckSummary summary = run_gradcheck(loss, a.trials, a.tol, a.step, a.seed);
    std::size_t checked = 0, excluded = 0, failed = 0;
    for (const auto& t : summary.trials) {
      checked += t.report.checked;
      excluded += t.report.excluded;
      failed += t.report.pass ? 0 : 1;
    }
    out << std::left << std::setw(12) << to_string(loss) << (summary.all_pass ? "PASS" : "FAIL")
        << "  max_rel_err=" << std::setprecision(3) << std::scientific << summary.worst_error
        << std::defaultfloat << "  trials=" << summary.trials.size() << "  failed=" << failed
        << "  coords=" << checked << "  excluded=" << excluded << '\n';
    auto& entry = doc[to_string(loss)];
    entry["pass"] = summary.all_pass;
    entry["max_relative_error"] = summary.worst_error;
    entry["trials"] = summary.trials.size();
    entry["failed_trials"] = failed;
    entry["checked_coordinates"] = checked;
    entry["excluded_coordinates"] = excluded;
    if (!summary.all_pass) {
      const auto& worst = summary.trials[static_cast<std::size_t>(summary.worst_trial)];
      out << "  worst coordinate: trial " << worst.trial << " (C=" << worst.classes
          << " K=" << worst.per_class << " D=" << worst.dim << " " << worst.params << ") row "
          << worst.report.worst_row << " col " << worst.report.worst_col
          << std::setprecision(12) << " numeric=" << worst.report.worst_numeric
          << " analytic=" << worst.report.worst_analytic << '\n';
      entry["worst"] = {{"trial", worst.trial},
                        {"row", worst.report.worst_row},
                        {"col", worst.report.worst_col},
                        {"numeric", worst.report.worst_numeric},
                        {"analytic", worst.report.worst_analytic}};
    }
    all_pass = all_pass && summary.all_pass;
  }
  doc["pass"] = all_pass;
  if (!a.report.empty()) write_text(a.report, doc.dump(2) + "\n");
  return all_pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  TrainFlags flags;
  std::string axis;
  std::string values;
  std::string train_data;
  std::string test_data;
  std::string ks = "1,2,4,8";
  std::string report;
};

void add_sweep(CLI::App& app, SweepArgs& a) {
  a.flags.loss = "rll";
  add_train_flags(app, a.flags, false);
  app.add_option("--axis", a.axis, "alpha | tn | tp | m | batch-content | embed-dim")->required();
  app.add_option("--values", a.values, "comma-separated values (CxK for batch-content)")
      ->required();
  app.add_option("--train", a.train_data, "training dataset file")->required();
  app.add_option("--test", a.test_data, "test dataset file")->required();
  app.add_option("--ks", a.ks, "comma-separated K values");
  app.add_option("--report", a.report, "machine-readable report path (JSON)");
}

int run_sweep(SweepArgs& a, std::ostream& out) {
  static const std::vector<std::string> axes = {"alpha", "tn", "tp", "m", "batch-content",
                                                "embed-dim"};
  if (std::find(axes.begin(), axes.end(), a.axis) == axes.end()) {
    usage("unknown sweep axis '" + a.axis + "'");
  }
  const std::vector<std::string> values = split_list(a.values);
  const std::vector<int> ks = parse_ks(a.ks);
  const TrainConfig base = resolve_train_config(a.flags);
  auto entries = describe(base);
  entries.emplace_back("axis", a.axis);
  entries.emplace_back("values", a.values);
  entries.emplace_back("train", a.train_data);
  entries.emplace_back("test", a.test_data);
  entries.emplace_back("ks", a.ks);
  echo(out, "sweep", entries);

  const Dataset train_split = load_dataset(a.train_data);
  const Dataset test_split = load_dataset(a.test_data);

  std::ostringstream header;
  header << std::left << std::setw(16) << a.axis;
  for (int k : ks) header << std::setw(10) << ("R@" + std::to_string(k));
  out << header.str() << '\n';
  nlohmann::ordered_json doc;
  doc["axis"] = a.axis;
  doc["rows"] = nlohmann::ordered_json::array();

  for (const std::string& value : values) {
    TrainConfig config = base;
    if (a.axis == "alpha") {
      config.loss.rll.alpha = parse_number(value);
    } else if (a.axis == "tn") {
      config.loss.rll.t_n = parse_number(value);
    } else if (a.axis == "tp") {
      config.loss.rll.t_p = parse_number(value);
    } else if (a.axis == "m") {
      config.loss.rll.margin = parse_number(value);
    } else if (a.axis == "embed-dim") {
      config.embed_dim = parse_int(value);
    } else {
      const auto x = value.find('x');
      if (x == std::string::npos) usage("batch-content values look like CxK, got '" + value + "'");
      config.batch_classes = parse_int(value.substr(0, x));
      config.batch_per_class = parse_int(value.substr(x + 1));
    }
    config.validate();
    const TrainResult result = train(train_split, config);
    const RecallReport report = evaluate_model(result.model, test_split, ks, &train_split);
    std::ostringstream row;
    row << std::left << std::setw(16) << value << std::fixed << std::setprecision(4);
    nlohmann::ordered_json json_row;
    json_row["value"] = value;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      row << std::setw(10) << report.recall[i];
      json_row["recall@" + std::to_string(ks[i])] = report.recall[i];
    }
    out << row.str() << '\n';
    doc["rows"].push_back(json_row);
  }
  if (!a.report.empty()) write_text(a.report, doc.dump(2) + "\n");
  return kExitOk;
}

// ------------------------------------------------------------- schedule

struct ScheduleArgs {
  double t1 = 0.0;
  double t2 = 0.0;
  long max_iter = 0;
  std::string at;
};

void add_schedule(CLI::App& app, ScheduleArgs& a) {
  app.add_option("--t1", a.t1, "initial temperature")->required();
  app.add_option("--t2", a.t2, "final temperature")->required();
  app.add_option("--max-iter", a.max_iter, "total iterations")->required();
  app.add_option("--at", a.at, "comma-separated iterations to print");
}

int run_schedule(ScheduleArgs& a, std::ostream& out) {
  const TemperatureSchedule schedule{a.t1, a.t2, a.max_iter};
  std::vector<long> at;
  if (a.at.empty()) {
    for (long q = 0; q < 4; ++q) at.push_back(a.max_iter * q / 4);
    at.push_back(a.max_iter - 1);
  } else {
    for (const auto& item : split_list(a.at)) at.push_back(parse_int(item));
  }
  echo(out, "schedule", {{"t1", num(a.t1)}, {"t2", num(a.t2)},
                         {"max_iter", std::to_string(a.max_iter)},
                         {"at", a.at.empty() ? "default" : a.at}});
  std::vector<double> values;
  for (long it : at) values.push_back(schedule_temperature(schedule, it));
  out << std::left << std::setw(12) << "iteration" << "T_n\n";
  for (std::size_t i = 0; i < at.size(); ++i) {
    out << std::left << std::setw(12) << at[i] << std::setprecision(12) << values[i] << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ranked list loss trainer and toolkit", "rll"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthArgs synth;
  TrainArgs train_args;
  EvalArgs eval;
  GradcheckArgs gradcheck;
  SweepArgs sweep;
  ScheduleArgs schedule;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate the synthetic benchmark");
  CLI::App* train_cmd = app.add_subcommand("train", "train an embedding model");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Recall@K of a checkpoint on a test set");
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train and evaluate over one axis");
  CLI::App* sched_cmd = app.add_subcommand("schedule", "print the dynamic T_n trajectory");
  add_synth(*synth_cmd, synth);
  add_train(*train_cmd, train_args);
  add_eval(*eval_cmd, eval);
  add_gradcheck(*grad_cmd, gradcheck);
  add_sweep(*sweep_cmd, sweep);
  add_schedule(*sched_cmd, schedule);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth, out);
    if (*train_cmd) return run_train(train_args, out);
    if (*eval_cmd) return run_eval(eval, out);
    if (*grad_cmd) return run_gradcheck_cmd(gradcheck, out);
    if (*sweep_cmd) return run_sweep(sweep, out);
    if (*sched_cmd) return run_schedule(schedule, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace rll
