#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "doctest.h"
#include "oeflow/container.hpp"
#include "oeflow/data.hpp"
#include "oeflow/eval.hpp"
#include "oeflow/report.hpp"
#include "oeflow/rng.hpp"
#include "support.hpp"

using namespace oeflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string log;
  std::string err;
};

Outcome oeflow_cmd(std::vector<std::string> args) {
  args.insert(args.begin(), "oeflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log, err;
  Outcome o;
  o.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), log, err);
  o.log = log.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void put(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

SyntheticSpec small_spec(std::uint64_t seed, long anomalies_per_type = 40) {
  SyntheticSpec spec;
  spec.dimension = 4;
  spec.seed = seed;
  spec.normal_count = 600;
  for (int c = 0; c < 2; ++c) {
    MixtureComponent m;
    m.weight = 0.5;
    m.mean = Vector::Constant(4, c == 0 ? -1.5 : 1.5);
    m.covariance = Matrix::Identity(4, 4) * (c == 0 ? 0.5 : 1.0);
    spec.components.push_back(m);
  }
  for (int t = 0; t < 3; ++t) {
    AnomalyFamily a;
    a.tag = "t" + std::to_string(t);
    a.shift = 2.0 + 2.0 * t;
    a.subspace = Matrix::Zero(2, 4);
    a.subspace(0, t) = 1.0;
    a.subspace(1, t + 1) = 1.0;
    a.noise_scale = 0.1;
    a.count = anomalies_per_type;
    spec.anomalies.push_back(a);
  }
  return spec;
}

/// Writes a small dataset and returns its path.
fs::path small_dataset(const fs::path& dir, long anomalies_per_type = 40) {
  const fs::path path = dir / "data.csv";
  save_dataset(generate_synthetic(small_spec(5, anomalies_per_type)), path);
  return path;
}

std::string run_config(const fs::path& data, const std::string& detector_fields) {
  return R"({"seed": 3, "data": {"path": ")" + data.string() + R"("}, "detector": {"max_epochs": 4, "hidden": 16, "batch_size": 64)" +
         (detector_fields.empty() ? "" : ", " + detector_fields) + "}}";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("generate writes a loadable dataset and is reproducible") {
    const fs::path dir = testing::scratch_dir("cli_generate");
    put(dir / "spec.json", synthetic_manifest(small_spec(9)));
    const std::string spec_before = slurp(dir / "spec.json");
    for (const char* out : {"a", "b"}) {
      const Outcome o = oeflow_cmd({"generate", "--config", (dir / "spec.json").string(), "--out", (dir / out).string(), "--quiet"});
      REQUIRE(o.code == 0);
      CHECK(o.log.empty());
    }
    CHECK(slurp(dir / "spec.json") == spec_before);
    CHECK(slurp(dir / "a/dataset.csv") == slurp(dir / "b/dataset.csv"));
    CHECK(slurp(dir / "a/manifest.json") == slurp(dir / "b/manifest.json"));
    const Dataset loaded = load_dataset(dir / "a/dataset.csv");
    CHECK(loaded.size() == 720);
    CHECK(loaded.dimension() == 4);

    const SyntheticSpec again = parse_synthetic_manifest(slurp(dir / "a/synthetic.json"));
    CHECK(generate_synthetic(again).features == loaded.features);

    REQUIRE(oeflow_cmd({"generate", "--config", (dir / "spec.json").string(), "--seed", "10", "--out",
                        (dir / "c").string(), "--quiet"}).code == 0);
    CHECK(slurp(dir / "c/dataset.csv") != slurp(dir / "a/dataset.csv"));
  }

  TEST_CASE("generate rejects malformed specs") {
    const fs::path dir = testing::scratch_dir("cli_generate_bad");
    put(dir / "broken.json", "{\"dimension\": ");
    Outcome o = oeflow_cmd({"generate", "--config", (dir / "broken.json").string(), "--out", (dir / "o").string()});
    CHECK(o.code == 3);
    CHECK(!o.err.empty());
    o = oeflow_cmd({"generate", "--config", (dir / "missing.json").string(), "--out", (dir / "o").string()});
    CHECK(o.code == 3);
    o = oeflow_cmd({"generate"});
    CHECK(o.code == 1);
    CHECK(o.err.find("--out") != std::string::npos);
  }

  TEST_CASE("usage errors") {
    CHECK(oeflow_cmd({}).code == 1);
    CHECK(oeflow_cmd({"frobnicate"}).code == 1);
    CHECK(oeflow_cmd({"train", "--workers", "0"}).code == 1);
    CHECK(oeflow_cmd({"--help"}).code == 0);
    CHECK(oeflow_cmd({"train", "--out", "/tmp/x"}).code == 1);
  }

  TEST_CASE("train writes model, history and manifest deterministically") {
    const fs::path dir = testing::scratch_dir("cli_train");
    const fs::path data = small_dataset(dir);
    const std::string data_before = slurp(data);
    put(dir / "oe.json", run_config(data, R"("kind": "RNVP_OE", "lambda": 1, "gamma": 100)"));
    for (const char* out : {"a", "b"}) {
      REQUIRE(oeflow_cmd({"train", "--config", (dir / "oe.json").string(), "--out", (dir / out).string(), "--quiet"}).code == 0);
    }
    CHECK(slurp(data) == data_before);
    CHECK(slurp(dir / "a/model.oeflow") == slurp(dir / "b/model.oeflow"));
    CHECK(slurp(dir / "a/manifest.json") == slurp(dir / "b/manifest.json"));

    const auto manifest = nlohmann::json::parse(slurp(dir / "a/manifest.json"));
    CHECK(manifest["command"] == "train");
    CHECK(manifest["config"]["seed"] == 3);
    CHECK(manifest["config"]["detector"]["gamma"] == 100.0);
    CHECK(manifest["config"]["detector"]["anomaly_batch_size"] == 64);
    CHECK(manifest["config"]["detector"]["coupling_layers"] == 4);

    std::istringstream history(slurp(dir / "a/history.tsv"));
    std::string line;
    std::getline(history, line);
    CHECK(line.find("oe_part") != std::string::npos);
    long rows = 0;
    double oe_sum = 0.0;
    while (std::getline(history, line)) {
      std::istringstream fields(line);
      std::string epoch, total, nll, oe;
      std::getline(fields, epoch, '\t');
      std::getline(fields, total, '\t');
      std::getline(fields, nll, '\t');
      std::getline(fields, oe, '\t');
      oe_sum += parse_double(oe);
      ++rows;
    }
    CHECK(rows == 4);
    CHECK(oe_sum > 0.0);

    REQUIRE(oeflow_cmd({"train", "--config", (dir / "oe.json").string(), "--seed", "4", "--out", (dir / "c").string(),
                        "--quiet"}).code == 0);
    CHECK(slurp(dir / "c/model.oeflow") != slurp(dir / "a/model.oeflow"));
    CHECK(nlohmann::json::parse(slurp(dir / "c/manifest.json"))["config"]["seed"] == 4);

    // The manifest's resolved config reproduces the run.
    put(dir / "resolved.json", manifest["config"].dump());
    REQUIRE(oeflow_cmd({"train", "--config", (dir / "resolved.json").string(), "--out", (dir / "d").string(), "--quiet"}).code == 0);
    CHECK(slurp(dir / "d/model.oeflow") == slurp(dir / "a/model.oeflow"));
  }

  TEST_CASE("RNVP equals RNVP_OE with lambda zero") {
    const fs::path dir = testing::scratch_dir("cli_rnvp");
    const fs::path data = small_dataset(dir);
    put(dir / "rnvp.json", run_config(data, R"("kind": "RNVP")"));
    put(dir / "oe0.json", run_config(data, R"("kind": "RNVP_OE", "lambda": 0)"));
    REQUIRE(oeflow_cmd({"train", "--config", (dir / "rnvp.json").string(), "--out", (dir / "r").string(), "--quiet"}).code == 0);
    REQUIRE(oeflow_cmd({"train", "--config", (dir / "oe0.json").string(), "--out", (dir / "o").string(), "--quiet"}).code == 0);
    auto columns = [&](const fs::path& path, int first, int last) {
      std::istringstream in(slurp(path));
      std::string out;
      for (std::string line; std::getline(in, line);) {
        std::istringstream fields(line);
        int index = 0;
        for (std::string field; std::getline(fields, field, '\t'); ++index) {
          if (index >= first && index <= last) out += field + "|";
        }
        out += "\n";
      }
      return out;
    };
    CHECK(columns(dir / "r/history.tsv", 0, 2) == columns(dir / "o/history.tsv", 0, 2));
    CHECK(columns(dir / "r/history.tsv", 4, 5) == columns(dir / "o/history.tsv", 4, 5));
    CHECK(columns(dir / "r/history.tsv", 3, 3) == "oe_part|\n0|\n0|\n0|\n0|\n");
    CHECK(slurp(dir / "r/test_scores.tsv") == slurp(dir / "o/test_scores.tsv"));
  }

  TEST_CASE("config invariants are enforced before training") {
    const fs::path dir = testing::scratch_dir("cli_invariants");
    const fs::path data = small_dataset(dir);
    const fs::path normal_only = dir / "normal.csv";
    save_dataset(generate_synthetic(small_spec(5, 0)), normal_only);

    struct Case {
      std::string config;
      std::string message;
    };
    const std::vector<Case> cases = {
        {run_config(data, R"("kind": "RNVP", "gamma": 10)"), "does not use lambda or gamma"},
        {run_config(data, R"("kind": "AE_MSE", "lambda": 1)"), "does not use lambda or gamma"},
        {run_config(normal_only, R"("kind": "RNVP_OE")"), "needs anomalies"},
        {run_config(normal_only, R"("kind": "BCLASS")"), "needs anomalies"},
        {run_config(data, R"("kind": "RNVP", "colour": 1)"), "unknown key 'colour'"},
        {run_config(data, R"("kind": "FANCY")"), "FANCY"},
        {run_config(data, R"("hidden": "wide")"), "wrong type"},
        {R"({"detector": {}})", "data"},
        {R"({"data": {"path": "a", "synthetic": "default"}})", "exactly one"},
    };
    for (std::size_t i = 0; i < cases.size(); ++i) {
      CAPTURE(cases[i].config);
      put(dir / "c.json", cases[i].config);
      const fs::path out = dir / ("out" + std::to_string(i));
      const Outcome o = oeflow_cmd({"train", "--config", (dir / "c.json").string(), "--out", out.string()});
      CHECK(o.code == 1);
      CHECK(o.err.find(cases[i].message) != std::string::npos);
      CHECK(!fs::exists(out / "model.oeflow"));
    }
    put(dir / "ok.json", run_config(normal_only, R"("kind": "RNVP")"));
    CHECK(oeflow_cmd({"train", "--config", (dir / "ok.json").string(), "--out", (dir / "ok").string(), "--quiet"}).code == 0);
  }

  TEST_CASE("divergence exits with code 2") {
    const fs::path dir = testing::scratch_dir("cli_diverge");
    Dataset d = generate_synthetic(small_spec(5));
    d.features *= 1e150;
    save_dataset(d, dir / "huge.csv");
    put(dir / "c.json", run_config(dir / "huge.csv", R"("kind": "RNVP", "standardize_input": false)"));
    const Outcome o = oeflow_cmd({"train", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()});
    CHECK(o.code == 2);
    CHECK(o.err.find("diverged") != std::string::npos);
  }

  TEST_CASE("score and evaluate") {
    const fs::path dir = testing::scratch_dir("cli_score");
    const fs::path data = small_dataset(dir);
    put(dir / "c.json", run_config(data, ""));
    REQUIRE(oeflow_cmd({"train", "--config", (dir / "c.json").string(), "--out", (dir / "t").string(), "--quiet"}).code == 0);
    const std::string model = (dir / "t/model.oeflow").string();
    const std::string model_before = slurp(model);

    for (const char* out : {"s1", "s2"}) {
      REQUIRE(oeflow_cmd({"score", model, data.string(), "--out", (dir / out).string(), "--quiet"}).code == 0);
    }
    CHECK(slurp(model) == model_before);
    const std::string table = slurp(dir / "s1/scores.tsv");
    CHECK(table == slurp(dir / "s2/scores.tsv"));
    std::istringstream in(table);
    const ScoredSet set = read_score_table(in);
    CHECK(set.entries.size() == 720);
    for (const auto& e : set.entries) CHECK(std::isfinite(e.score));

    REQUIRE(oeflow_cmd({"evaluate", (dir / "s1/scores.tsv").string(), "--out", (dir / "e").string(), "--quiet"}).code == 0);
    const std::string report = slurp(dir / "e/report.tsv");
    CHECK(report.find("global\tauc\t" + format_double(auc(set)) + "\n") != std::string::npos);
    CHECK(fs::exists(dir / "e/roc.tsv"));
    CHECK(fs::exists(dir / "e/roc.svg"));

    REQUIRE(oeflow_cmd({"evaluate", "--model", model, "--data", data.string(), "--out", (dir / "m").string(), "--quiet"}).code == 0);
    const std::string model_report = slurp(dir / "m/report.tsv");
    CHECK(model_report.find("global\tauc\t" + format_double(auc(set)) + "\n") != std::string::npos);
    CHECK(model_report.find("separation\tanomaly_norm.median") != std::string::npos);

    Dataset wide = generate_synthetic(small_spec(5));
    wide.features.conservativeResize(6, Eigen::NoChange);
    wide.features.bottomRows(2).setZero();
    save_dataset(wide, dir / "wide.csv");
    const Outcome o = oeflow_cmd({"score", model, (dir / "wide.csv").string(), "--out", (dir / "w").string()});
    CHECK(o.code == 1);
    CHECK(o.err.find('4') != std::string::npos);
    CHECK(o.err.find('6') != std::string::npos);

    const Outcome clash = oeflow_cmd({"score", model, data.string(), "--out", (dir / "t").string()});
    CHECK(clash.code == 0);
    put(dir / "scores.tsv", "id\tlabel\ttype\tscore\n");
    const Outcome overwrite =
        oeflow_cmd({"score", model, (dir / "scores.tsv").string(), "--out", dir.string()});
    CHECK(overwrite.code != 0);
    CHECK(slurp(dir / "scores.tsv") == "id\tlabel\ttype\tscore\n");
  }

  TEST_CASE("evaluate calibration and class checks") {
    const fs::path dir = testing::scratch_dir("cli_evaluate");
    Rng rng(41);
    const long n = 2000;
    std::vector<std::string> labels(n);
    Vector perfect(n), shuffled(n);
    for (long i = 0; i < n; ++i) {
      labels[i] = i % 2 ? "a" : kNormalLabel;
      perfect[i] = i % 2 ? 10.0 + i : static_cast<double>(i) - 1e4;
      shuffled[i] = rng.normal();
    }
    auto write = [&](const std::string& name, const Vector& scores, const std::vector<std::string>& l) {
      std::ofstream out(dir / name);
      write_score_table(out, l, scores);
    };
    write("perfect.tsv", perfect, labels);
    write("shuffled.tsv", shuffled, labels);
    write("single.tsv", perfect.head(3), std::vector<std::string>(3, kNormalLabel));

    REQUIRE(oeflow_cmd({"evaluate", (dir / "perfect.tsv").string(), "--out", (dir / "p").string(), "--quiet"}).code == 0);
    CHECK(slurp(dir / "p/report.tsv").find("global\tauc\t1\n") != std::string::npos);

    REQUIRE(oeflow_cmd({"evaluate", (dir / "shuffled.tsv").string(), "--out", (dir / "s").string(), "--quiet"}).code == 0);
    std::ifstream in(dir / "shuffled.tsv");
    const double value = auc(read_score_table(in));
    CHECK(value == doctest::Approx(0.5).epsilon(0.1));
    CHECK(std::abs(value - 0.5) <= 0.05);

    const Outcome single = oeflow_cmd({"evaluate", (dir / "single.tsv").string(), "--out", (dir / "x").string()});
    CHECK(single.code == 1);
    CHECK(oeflow_cmd({"evaluate", "--out", (dir / "x").string()}).code == 1);
    CHECK(oeflow_cmd({"evaluate", (dir / "perfect.tsv").string(), "--model", "m", "--out", (dir / "x").string()}).code == 1);
    put(dir / "junk.tsv", "id\tlabel\ttype\tscore\n0\tnormal\t\tabc\n");
    CHECK(oeflow_cmd({"evaluate", (dir / "junk.tsv").string(), "--out", (dir / "x").string()}).code == 3);
  }

  TEST_CASE("sweep bookkeeping, resume and exposed-count baseline") {
    const fs::path dir = testing::scratch_dir("cli_sweep");
    const fs::path data = small_dataset(dir);
    const std::string base = R"({"seed": 2, "data": {"path": ")" + data.string() +
                             R"("}, "detector": {"max_epochs": 2, "hidden": 8, "batch_size": 64}, "sweep": )";
    put(dir / "lambda.json", base + R"({"axis": "lambda", "values": [0, 0.1, 1, 10], "repetitions": 3}})");
    REQUIRE(oeflow_cmd({"sweep", "--config", (dir / "lambda.json").string(), "--out", (dir / "l").string(), "--quiet"}).code == 0);

    std::istringstream table(slurp(dir / "l/sweep.tsv"));
    std::vector<std::string> lines;
    for (std::string line; std::getline(table, line);) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[1].rfind("lambda\t0\tRNVP_OE\t3\t0\t", 0) == 0);
    CHECK(lines[2].rfind("lambda\t0.1\tRNVP_OE\t3\t0\t", 0) == 0);
    long run_files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "l/runs")) run_files += entry.path().extension() == ".json";
    CHECK(run_files == 12);

    // Resumes from stored runs: an edited run file is reused, not retrained.
    const fs::path run_file = dir / "l/runs/run_lambda_1_RNVP_OE_0.json";
    REQUIRE(fs::exists(run_file));
    auto run = nlohmann::json::parse(slurp(run_file));
    run["auc_all"] = 0.0;
    put(run_file, run.dump());
    const std::string before = slurp(dir / "l/sweep.tsv");
    REQUIRE(oeflow_cmd({"sweep", "--config", (dir / "lambda.json").string(), "--out", (dir / "l").string(), "--quiet"}).code == 0);
    CHECK(slurp(dir / "l/sweep.tsv") != before);

    // Worker count does not change results.
    REQUIRE(oeflow_cmd({"sweep", "--config", (dir / "lambda.json").string(), "--workers", "3", "--out",
                        (dir / "l3").string(), "--quiet"}).code == 0);
    const std::string fresh = slurp(dir / "l3/sweep.tsv");
    CHECK(fresh == before);

    put(dir / "count.json", base + R"({"axis": "exposed_count", "values": [0, 16], "detectors": ["RNVP_OE", "RNVP"], "repetitions": 2}})");
    REQUIRE(oeflow_cmd({"sweep", "--config", (dir / "count.json").string(), "--out", (dir / "c").string(), "--quiet"}).code == 0);
    std::istringstream counts(slurp(dir / "c/sweep.tsv"));
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(counts, line);) {
      std::vector<std::string> fields;
      std::istringstream f(line);
      for (std::string field; std::getline(f, field, '\t');) fields.push_back(field);
      rows.push_back(fields);
    }
    REQUIRE(rows.size() == 5);
    CHECK(rows[1][1] == "0");
    CHECK(rows[2][1] == "0");
    CHECK(rows[1][5] == rows[2][5]);
    CHECK(rows[1][6] == rows[2][6]);

    put(dir / "defaults.json", base + R"({"axis": "lambda", "repetitions": 1}})");
    REQUIRE(oeflow_cmd({"sweep", "--config", (dir / "defaults.json").string(), "--out", (dir / "d").string(), "--quiet"}).code == 0);
    const auto resolved = nlohmann::json::parse(slurp(dir / "d/manifest.json"))["config"]["sweep"];
    CHECK(resolved["values"] == nlohmann::json({"0", "0.1", "1", "10"}));
    put(dir / "counts.json", base + R"({"axis": "exposed_count", "repetitions": 1}})");
    REQUIRE(oeflow_cmd({"sweep", "--config", (dir / "counts.json").string(), "--out", (dir / "n").string(), "--quiet"}).code == 0);
    CHECK(nlohmann::json::parse(slurp(dir / "n/manifest.json"))["config"]["sweep"]["values"] ==
          nlohmann::json({"2", "4", "8", "16", "32", "64"}));

    put(dir / "badaxis.json", base + R"({"axis": "gamma", "values": [1], "detectors": ["RNVP"]}})");
    CHECK(oeflow_cmd({"sweep", "--config", (dir / "badaxis.json").string(), "--out", (dir / "b").string()}).code == 1);
    put(dir / "noaxis.json", base + R"({"values": [1]}})");
    CHECK(oeflow_cmd({"sweep", "--config", (dir / "noaxis.json").string(), "--out", (dir / "b").string()}).code == 1);
  }
}
