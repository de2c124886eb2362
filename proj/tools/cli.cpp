#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "oeflow/container.hpp"
#include "oeflow/detector.hpp"
#include "oeflow/errors.hpp"
#include "oeflow/report.hpp"
#include "oeflow/sweep.hpp"
#include "run_config.hpp"

namespace oeflow::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned workers = 1;
  bool quiet = false;
};

class Session {
 public:
  Session(const Globals& globals, std::ostream& log) : globals_(globals), log_(log) {}

  void info(const std::string& line) const {
    if (!globals_.quiet) log_ << line << '\n';
  }

  /// Creates --out and records every input so that no output overwrites one.
  fs::path prepare_output(const std::vector<std::string>& inputs) {
    if (globals_.out.empty()) throw UsageError("--out is required");
    const fs::path dir(globals_.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    for (const auto& input : inputs) inputs_.push_back(fs::weakly_canonical(input));
    return dir;
  }

  fs::path output(const fs::path& dir, const std::string& name) {
    const fs::path path = dir / name;
    const fs::path canonical = fs::weakly_canonical(path);
    for (const auto& input : inputs_) {
      if (canonical == input) throw UsageError("output " + path.string() + " would overwrite an input file");
    }
    outputs_.push_back(name);
    return path;
  }

  template <typename Writer>
  void write_text(const fs::path& dir, const std::string& name, Writer&& writer) {
    const fs::path path = output(dir, name);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    writer(out);
    out.flush();
    if (!out) throw IoError("error while writing " + path.string());
  }

  void write_manifest(const fs::path& dir, const std::string& command, json config, json inputs) {
    json manifest{{"command", command}, {"config", std::move(config)}, {"inputs", std::move(inputs)}};
    outputs_.push_back("manifest.json");
    manifest["outputs"] = outputs_;
    write_text_unchecked(dir / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  static void write_text_unchecked(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("error while writing " + path.string());
  }

  const Globals& globals_;
  std::ostream& log_;
  std::vector<fs::path> inputs_;
  std::vector<std::string> outputs_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string shape_text(const Dataset& d) {
  return std::to_string(d.normal_count()) + " normals, " + std::to_string(d.anomaly_count()) + " anomalies";
}

void cmd_generate(const Globals& g, Session& session) {
  SyntheticSpec spec;
  json config;
  if (!g.config.empty()) {
    spec = parse_synthetic_manifest(read_file(g.config));
    if (g.seed) spec.seed = *g.seed;
  } else {
    spec = default_benchmark_spec(g.seed.value_or(7));
  }
  spec.validate();
  const fs::path dir = session.prepare_output(g.config.empty() ? std::vector<std::string>{} : std::vector{g.config});
  const Dataset dataset = generate_synthetic(spec);
  const fs::path data_path = session.output(dir, "dataset.csv");
  save_dataset(dataset, data_path);
  session.write_text(dir, "synthetic.json", [&](std::ostream& out) { out << synthetic_manifest(spec); });
  session.info("generated " + shape_text(dataset) + " in " + std::to_string(dataset.dimension()) + " dimensions");
  session.write_manifest(dir, "generate", json::parse(synthetic_manifest(spec)),
                         g.config.empty() ? json::object() : json{{"spec", g.config}});
}

struct PreparedData {
  Splits splits;
  std::optional<Reducer> reducer;
  std::optional<TrainHistory> reducer_history;
};

PreparedData prepare_data(const RunConfig& config, const Session& session) {
  const Dataset dataset = load_source(config.data);
  PreparedData prepared{split(dataset, config.data.split), std::nullopt, std::nullopt};
  session.info("train split: " + shape_text(prepared.splits.train));
  if (config.reducer.kind != ReducerKind::None) {
    ReducerConfig reducer = config.reducer;
    reducer.autoencoder.seed = config.seed;
    auto fitted = fit_reducer(reducer, prepared.splits.train.normals(), prepared.splits.validation.normals());
    prepared.reducer = std::move(fitted.reducer);
    prepared.reducer_history = std::move(fitted.history);
    session.info("fitted " + to_string(config.reducer.kind) + " reducer to " +
                 std::to_string(reducer_output_dim(*prepared.reducer)) + " dimensions");
  }
  return prepared;
}

void require_anomalies(DetectorKind kind, const Dataset& train) {
  if (uses_anomalies(kind) && kind != DetectorKind::RNVP && train.anomaly_count() == 0) {
    throw UsageError("detector " + to_string(kind) + " needs anomalies in the training split, found none");
  }
}

json inputs_of(const RunConfig& config, const std::string& config_path) {
  json inputs{{"config", config_path}};
  if (!config.data.path.empty()) inputs["dataset"] = config.data.path;
  if (!config.data.synthetic.empty() && config.data.synthetic != "default") inputs["synthetic"] = config.data.synthetic;
  return inputs;
}

std::vector<std::string> input_files(const RunConfig& config, const std::string& config_path) {
  std::vector<std::string> files{config_path};
  if (!config.data.path.empty()) files.push_back(config.data.path);
  if (!config.data.synthetic.empty() && config.data.synthetic != "default") files.push_back(config.data.synthetic);
  return files;
}

void cmd_train(const Globals& g, Session& session) {
  if (g.config.empty()) throw UsageError("train needs --config");
  RunConfig config = parse_run_config(read_json_file(g.config));
  if (g.seed) apply_seed(config, *g.seed);
  const fs::path dir = session.prepare_output(input_files(config, g.config));

  PreparedData data = prepare_data(config, session);
  require_anomalies(config.detector.kind, data.splits.train);
  auto encoded = [&](const Matrix& x) { return data.reducer ? encode(*data.reducer, x) : x; };
  session.info("training " + to_string(config.detector.kind));
  DetectorTrainResult result =
      train_detector(config.detector, encoded(data.splits.train.normals()), encoded(data.splits.train.anomalies()),
                     encoded(data.splits.validation.normals()), data.reducer);
  session.info("best epoch " + std::to_string(result.history.best_epoch) + " of " +
               std::to_string(result.history.epochs.size()));

  save_container(session.output(dir, "model.oeflow"), result.pipeline.to_container());
  session.write_text(dir, "history.tsv", [&](std::ostream& out) { write_history(out, result.history); });
  if (data.reducer_history) {
    session.write_text(dir, "reducer_history.tsv",
                       [&](std::ostream& out) { write_history(out, *data.reducer_history); });
  }
  const Dataset& test = data.splits.test;
  const Vector scores = result.pipeline.score(test.features);
  session.write_text(dir, "test_scores.tsv", [&](std::ostream& out) { write_score_table(out, test.labels, scores); });
  session.write_manifest(dir, "train", resolved(config), inputs_of(config, g.config));
}

void cmd_score(const Globals& g, Session& session, const std::string& model_path, const std::string& data_path) {
  const fs::path dir = session.prepare_output({model_path, data_path});
  const Pipeline pipeline = Pipeline::from_container(load_container(model_path));
  const Dataset dataset = load_dataset(data_path);
  const Vector scores = pipeline.score(dataset.features);
  session.write_text(dir, "scores.tsv", [&](std::ostream& out) { write_score_table(out, dataset.labels, scores); });
  session.info("scored " + shape_text(dataset) + " with " + to_string(pipeline.kind));
  session.write_manifest(dir, "score", json::object(), {{"model", model_path}, {"dataset", data_path}});
  (void)g;
}

void cmd_evaluate(const Globals& g, Session& session, const std::string& scores_path, const std::string& model_path,
                  const std::string& data_path) {
  const bool from_table = !scores_path.empty();
  if (from_table == (!model_path.empty() || !data_path.empty())) {
    throw UsageError("evaluate takes either a score table or --model with --data");
  }
  if (!from_table && (model_path.empty() || data_path.empty())) throw UsageError("evaluate needs both --model and --data");

  EvalReport report;
  json inputs;
  if (from_table) {
    session.prepare_output({scores_path});
    std::ifstream in(scores_path);
    if (!in) throw IoError("cannot open " + scores_path);
    const ScoredSet set = read_score_table(in);
    set.require_both_classes();
    report = evaluate(set);
    inputs = {{"scores", scores_path}};
  } else {
    session.prepare_output({model_path, data_path});
    const Pipeline pipeline = Pipeline::from_container(load_container(model_path));
    const Dataset dataset = load_dataset(data_path);
    const ScoredSet set = make_scored_set(pipeline.score(dataset.features), dataset.labels);
    set.require_both_classes();
    report = evaluate(set);
    if (const FlowModel* flow = pipeline.flow()) {
      auto encoded = [&](const Matrix& x) { return pipeline.reducer ? encode(*pipeline.reducer, x) : x; };
      report.separation = separation_stats(*flow, encoded(dataset.normals()), encoded(dataset.anomalies()));
    }
    inputs = {{"model", model_path}, {"dataset", data_path}};
  }
  const fs::path dir(g.out);
  session.write_text(dir, "report.tsv", [&](std::ostream& out) { write_eval_report(out, report); });
  session.write_text(dir, "roc.tsv", [&](std::ostream& out) { write_roc_table(out, report.roc); });
  session.write_text(dir, "roc.svg", [&](std::ostream& out) {
    write_roc_svg(out, report.roc, "ROC (AUC " + format_double(report.auc) + ")");
  });
  session.info("AUC " + format_double(report.auc));
  session.write_manifest(dir, "evaluate", json::object(), inputs);
}

void cmd_sweep(const Globals& g, Session& session, bool workers_set) {
  if (g.config.empty()) throw UsageError("sweep needs --config");
  SweepConfig config = parse_sweep_config(read_json_file(g.config));
  if (g.seed) {
    apply_seed(config.run, *g.seed);
    config.sweep.base_seed = *g.seed;
  }
  if (workers_set) config.sweep.workers = g.workers;
  if (config.sweep.workers == 0) throw UsageError("--workers must be at least 1");
  const fs::path dir = session.prepare_output(input_files(config.run, g.config));

  PreparedData data = prepare_data(config.run, session);
  if (data.reducer) {
    for (Dataset* part : {&data.splits.train, &data.splits.validation, &data.splits.test}) {
      part->features = encode(*data.reducer, part->features);
    }
  }
  if (config.default_values && config.sweep.axis == SweepAxis::ExposedCount) {
    const long available = data.splits.train.anomaly_count();
    std::erase_if(config.sweep.values, [&](const std::string& v) { return std::stol(v) > available; });
    if (config.sweep.values.empty()) throw UsageError("the training split has too few anomalies for an exposed_count sweep");
  }
  config.sweep.run_directory = dir / "runs";
  fs::create_directories(*config.sweep.run_directory);
  session.info("sweeping " + to_string(config.sweep.axis) + " over " + std::to_string(config.sweep.values.size()) +
               " values");
  const SweepReport report = run_sweep(config.sweep, config.run.detector, data.splits);

  session.write_text(dir, "sweep.tsv", [&](std::ostream& out) { write_sweep_table(out, report); });
  session.write_text(dir, "runs.tsv", [&](std::ostream& out) { write_sweep_runs(out, report); });
  session.write_text(dir, "sweep.svg", [&](std::ostream& out) {
    write_sweep_svg(out, report, "AUC over " + to_string(config.sweep.axis));
  });
  std::size_t failures = 0;
  for (const auto& p : report.points) failures += p.failures;
  session.info(std::to_string(report.runs.size()) + " runs, " + std::to_string(failures) + " diverged");
  json resolved_config = resolved(config);
  resolved_config["sweep"]["workers"] = config.sweep.workers;
  session.write_manifest(dir, "sweep", resolved_config, inputs_of(config.run, g.config));
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& log, std::ostream& err) {
  CLI::App app{"Normalizing-flow anomaly detection with outlier exposure", "oeflow"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_option = app.add_option("--seed", seed, "Seed overriding the configuration");
  app.add_option("--config", g.config, "Configuration file");
  app.add_option("--out", g.out, "Output directory");
  auto* workers_option = app.add_option("--workers", g.workers, "Parallel sweep runs")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress lines");

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (default benchmark unless --config names a spec)");
  auto* train = app.add_subcommand("train", "Train the configured pipeline");
  auto* score = app.add_subcommand("score", "Score a dataset with a trained model");
  std::string model_path, data_path;
  score->add_option("model", model_path, "Model file")->required();
  score->add_option("dataset", data_path, "Dataset file")->required();
  auto* evaluate_cmd = app.add_subcommand("evaluate", "AUC, per-type AUC and ROC from a score table or a model");
  std::string scores_path, eval_model, eval_data;
  evaluate_cmd->add_option("scores", scores_path, "Score table");
  evaluate_cmd->add_option("--model", eval_model, "Model file");
  evaluate_cmd->add_option("--data", eval_data, "Dataset file");
  auto* sweep = app.add_subcommand("sweep", "Run a hyperparameter or exposure sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, error;
    const int code = app.exit(e, out, error);
    log << out.str();
    err << error.str();
    return code == 0 ? kOk : kUsage;
  }
  if (*seed_option) g.seed = seed;

  Session session(g, log);
  try {
    if (*generate) cmd_generate(g, session);
    if (*train) cmd_train(g, session);
    if (*score) cmd_score(g, session, model_path, data_path);
    if (*evaluate_cmd) cmd_evaluate(g, session, scores_path, eval_model, eval_data);
    if (*sweep) cmd_sweep(g, session, static_cast<bool>(*workers_option));
    return kOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace oeflow::cli
