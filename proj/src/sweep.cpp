#include "oeflow/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "oeflow/errors.hpp"

namespace oeflow {

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::Gamma: return "gamma";
    case SweepAxis::ExposedCount: return "exposed_count";
    case SweepAxis::ExposedTypeCount: return "exposed_type_count";
    case SweepAxis::Detector: return "detector";
  }
  return "lambda";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  for (auto axis : {SweepAxis::Lambda, SweepAxis::Gamma, SweepAxis::ExposedCount, SweepAxis::ExposedTypeCount,
                    SweepAxis::Detector}) {
    if (to_string(axis) == name) return axis;
  }
  throw UsageError("invalid sweep axis '" + name +
                   "' (expected lambda, gamma, exposed_count, exposed_type_count or detector)");
}

void SweepSpec::validate() const {
  if (repetitions < 1) throw UsageError("sweep repetitions must be >= 1");
  if (values.empty()) throw UsageError("sweep grid is empty");
  if (axis != SweepAxis::Detector && detectors.empty()) throw UsageError("sweep needs at least one detector");
  for (const auto& v : values) {
    switch (axis) {
      case SweepAxis::Lambda:
      case SweepAxis::Gamma:
        if (!(parse_double(v) >= 0)) throw UsageError("sweep value " + v + " must be >= 0");
        break;
      case SweepAxis::ExposedCount:
      case SweepAxis::ExposedTypeCount:
        if (parse_long(v) < 0) throw UsageError("sweep value " + v + " must be >= 0");
        break;
      case SweepAxis::Detector: detector_from_string(v); break;
    }
  }
}

const SweepPoint& SweepReport::point(const std::string& value, DetectorKind detector) const {
  for (const auto& p : points) {
    if (p.value == value && p.detector == detector) return p;
  }
  throw UsageError("sweep report has no point " + value + " / " + to_string(detector));
}

namespace {

std::string run_file_name(SweepAxis axis, const std::string& value, DetectorKind detector, long repetition) {
  return "run_" + to_string(axis) + "_" + value + "_" + to_string(detector) + "_" + std::to_string(repetition) + ".json";
}

nlohmann::json run_json(const SweepRun& run) {
  nlohmann::json j{{"value", run.value},
                   {"detector", to_string(run.detector)},
                   {"repetition", run.repetition},
                   {"seed", run.seed},
                   {"ok", run.ok},
                   {"error", run.error},
                   {"auc_all", run.auc_all},
                   {"exposed_types", run.exposed_types},
                   {"exposed_count", run.exposed_count}};
  j["auc_exposed"] = run.auc_exposed ? nlohmann::json(*run.auc_exposed) : nlohmann::json(nullptr);
  j["auc_unexposed"] = run.auc_unexposed ? nlohmann::json(*run.auc_unexposed) : nlohmann::json(nullptr);
  return j;
}

SweepRun run_from_json(const nlohmann::json& j) {
  SweepRun run;
  run.value = j.at("value").get<std::string>();
  run.detector = detector_from_string(j.at("detector").get<std::string>());
  run.repetition = j.at("repetition").get<long>();
  run.seed = j.at("seed").get<std::uint64_t>();
  run.ok = j.at("ok").get<bool>();
  run.error = j.at("error").get<std::string>();
  run.auc_all = j.at("auc_all").get<double>();
  run.exposed_types = j.at("exposed_types").get<std::vector<std::string>>();
  run.exposed_count = j.at("exposed_count").get<long>();
  if (!j.at("auc_exposed").is_null()) run.auc_exposed = j.at("auc_exposed").get<double>();
  if (!j.at("auc_unexposed").is_null()) run.auc_unexposed = j.at("auc_unexposed").get<double>();
  return run;
}

}  // namespace

SweepRun run_single(const SweepSpec& spec, const DetectorConfig& base, const Splits& data, const std::string& value,
                    DetectorKind detector, long repetition) {
  SweepRun run;
  run.value = value;
  run.detector = detector;
  run.repetition = repetition;
  run.seed = spec.base_seed + static_cast<std::uint64_t>(repetition);

  DetectorConfig config = base;
  config.kind = detector;
  config.train.seed = run.seed;
  Dataset train = data.train;
  switch (spec.axis) {
    case SweepAxis::Lambda: config.train.lambda = parse_double(value); break;
    case SweepAxis::Gamma: config.train.gamma = parse_double(value); break;
    case SweepAxis::ExposedCount: {
      const auto n = static_cast<std::size_t>(parse_long(value));
      train = subsample_anomalies(train, n, Rng::derive(run.seed, 10 + n));
      break;
    }
    case SweepAxis::ExposedTypeCount: {
      auto types = train.present_types();
      const auto n = static_cast<std::size_t>(parse_long(value));
      if (n > types.size()) throw UsageError("cannot expose " + value + " of " + std::to_string(types.size()) + " types");
      Rng rng(Rng::derive(run.seed, 20 + n));
      rng.shuffle(types);
      types.resize(n);
      std::sort(types.begin(), types.end());
      run.exposed_types = types;
      train = select_types(train, {types.begin(), types.end()});
      break;
    }
    case SweepAxis::Detector: config.kind = detector_from_string(value); run.detector = config.kind; break;
  }
  run.exposed_count = train.anomaly_count();

  try {
    const auto trained = train_detector(config, train.normals(), train.anomalies(), data.validation.normals());
    const Vector scores = trained.pipeline.score(data.test.features);
    const ScoredSet set = make_scored_set(scores, data.test.labels);
    run.auc_all = auc(set);
    if (spec.axis == SweepAxis::ExposedTypeCount) {
      run.auc_exposed = auc_restricted(set, run.exposed_types, true);
      run.auc_unexposed = auc_restricted(set, run.exposed_types, false);
    }
    run.ok = true;
  } catch (const NumericError& e) {
    run.ok = false;
    run.error = e.what();
  }
  return run;
}

SweepReport run_sweep(const SweepSpec& spec, const DetectorConfig& base, const Splits& data) {
  spec.validate();
  struct Job {
    std::size_t grid_index;
    std::string value;
    DetectorKind detector;
    long repetition;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < spec.values.size(); ++g) {
    const auto detectors = spec.axis == SweepAxis::Detector
                               ? std::vector<DetectorKind>{detector_from_string(spec.values[g])}
                               : spec.detectors;
    for (auto detector : detectors) {
      if (detector == DetectorKind::BCLASS && spec.axis == SweepAxis::ExposedCount && parse_long(spec.values[g]) == 0) {
        continue;
      }
      if (detector == DetectorKind::BCLASS && spec.axis == SweepAxis::ExposedTypeCount && parse_long(spec.values[g]) == 0) {
        continue;
      }
      for (long r = 0; r < spec.repetitions; ++r) jobs.push_back({g, spec.values[g], detector, r});
    }
  }
  if (spec.run_directory) std::filesystem::create_directories(*spec.run_directory);

  std::vector<SweepRun> runs(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      try {
        std::optional<std::filesystem::path> file;
        if (spec.run_directory) {
          file = *spec.run_directory / run_file_name(spec.axis, job.value, job.detector, job.repetition);
          if (std::filesystem::exists(*file)) {
            std::ifstream in(*file);
            runs[i] = run_from_json(nlohmann::json::parse(in));
            continue;
          }
        }
        runs[i] = run_single(spec, base, data, job.value, job.detector, job.repetition);
        if (file) {
          const auto tmp = file->string() + ".tmp";
          {
            std::ofstream out(tmp, std::ios::trunc);
            out << run_json(runs[i]).dump(2) << '\n';
          }
          std::filesystem::rename(tmp, *file);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(spec.workers, static_cast<unsigned>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SweepReport report;
  report.axis = spec.axis;
  report.runs = runs;
  std::size_t i = 0;
  while (i < jobs.size()) {
    std::size_t j = i;
    SweepPoint point;
    point.value = jobs[i].value;
    point.detector = jobs[i].detector;
    std::vector<double> all, exposed, unexposed;
    while (j < jobs.size() && jobs[j].grid_index == jobs[i].grid_index && jobs[j].detector == jobs[i].detector) {
      const auto& run = runs[j];
      if (run.ok) {
        all.push_back(run.auc_all);
        if (run.auc_exposed) exposed.push_back(*run.auc_exposed);
        if (run.auc_unexposed) unexposed.push_back(*run.auc_unexposed);
      } else {
        ++point.failures;
      }
      ++j;
    }
    point.all = mean_ci95(all);
    point.exposed = mean_ci95(exposed);
    point.unexposed = mean_ci95(unexposed);
    report.points.push_back(std::move(point));
    i = j;
  }
  return report;
}

}  // namespace oeflow
