#include "fewshot/api/learner.hpp"

#include <cmath>
#include <fstream>

#include "fewshot/error.hpp"
#include "fewshot/scoring/report.hpp"

namespace fewshot::api {

namespace fs = std::filesystem;

const char* mode_name(DataMode mode) {
  switch (mode) {
    case DataMode::none: return "none";
    case DataMode::episodes: return "episodes";
    case DataMode::batches: return "batches";
  }
  return "?";
}

DataMode source_mode(const DataSource& source) {
  if (std::holds_alternative<sample::EpisodeStream*>(source)) return DataMode::episodes;
  if (std::holds_alternative<sample::BatchStream*>(source)) return DataMode::batches;
  return DataMode::none;
}

void MetaLearner::train_on(const sample::Task&) {
  throw ConfigError(method_id() + " does not train on episodes (mode " + mode_name(mode()) + ")");
}

void MetaLearner::train_on(const sample::Batch&) {
  throw ConfigError(method_id() + " does not train on batches (mode " + mode_name(mode()) + ")");
}

std::unique_ptr<Learner> MetaLearner::meta_fit(DataSource meta_train, DataSource) {
  if (mode() == DataMode::none) return snapshot();
  if (source_mode(meta_train) != mode()) {
    throw ConfigError(method_id() + " expects " + mode_name(mode()) + " but got " + mode_name(source_mode(meta_train)));
  }
  if (auto* episodes = std::get_if<sample::EpisodeStream*>(&meta_train)) {
    if ((*episodes)->count() == sample::kUnlimited) throw ConfigError("meta_fit needs a bounded episode stream");
    while (auto task = (*episodes)->next()) train_on(*task);
  } else {
    throw ConfigError("meta_fit on an unbounded batch stream needs run_meta_fit with an iteration count");
  }
  return snapshot();
}

const std::string& LearnerManifest::get(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  throw FormatError("learner manifest lacks '" + key + "'");
}

void write_learner_dir(const fs::path& dir, const LearnerManifest& manifest, const nd::ParamSet& params) {
  fs::create_directories(dir);
  std::ofstream out(dir / "manifest.txt", std::ios::binary);
  if (!out) throw FormatError("cannot write " + (dir / "manifest.txt").string());
  out << "method=" << manifest.method << "\nseed=" << manifest.seed << '\n';
  for (const auto& [k, v] : manifest.fields) out << k << '=' << v << '\n';
  nd::save_params(params, dir / "params.manifest", dir / "params.bin");
}

std::pair<LearnerManifest, nd::ParamSet> read_learner_dir(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw FormatError("missing manifest.txt in " + dir.string());
  LearnerManifest m;
  bool have_method = false, have_seed = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest.txt: line without '=': " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "method") {
      m.method = value;
      have_method = true;
    } else if (key == "seed") {
      try {
        m.seed = std::stoull(value);
      } catch (const std::logic_error&) {
        throw FormatError("manifest.txt: bad seed '" + value + "'");
      }
      have_seed = true;
    } else {
      m.fields.emplace_back(key, value);
    }
  }
  if (!have_method || !have_seed) throw FormatError("manifest.txt in " + dir.string() + " lacks method or seed");
  return {std::move(m), nd::load_params(dir / "params.manifest", dir / "params.bin")};
}

TaskRun run_task(const Learner& learner, const sample::Task& task) {
  TaskRun run;
  const auto start = std::chrono::steady_clock::now();
  try {
    auto predictor = learner.fit(task.support);
    nd::Tensor probs = predictor->predict(task.query);
    const std::size_t rows = task.query.images.size(), cols = static_cast<std::size_t>(task.ways);
    if (probs.shape() != nd::Shape{rows, cols}) {
      throw ShapeError("predictor returned " + nd::shape_string(probs.shape()) + ", expected " +
                       nd::shape_string({rows, cols}));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double p = probs[r * cols + c];
        if (!std::isfinite(p) || p < 0.0) throw NumericError("predictor returned an invalid probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw NumericError("probability row does not sum to 1");
    }
    run.probs = std::move(probs);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

double mean_normalized_accuracy(const Learner& learner, const std::vector<sample::Task>& tasks) {
  if (tasks.empty()) throw ConfigError("no validation tasks");
  double sum = 0.0;
  for (const auto& task : tasks) {
    const TaskRun run = run_task(learner, task);
    const auto truth = task.query_labels.reveal();
    const score::TaskScore s = run.failed()
                                   ? score::failed_task(task.task_index, task.dataset_id, task.ways, task.shots)
                                   : score::score_task(task.task_index, task.dataset_id, task.ways, task.shots,
                                                       *run.probs, truth);
    sum += s.normalized;
  }
  return sum / static_cast<double>(tasks.size());
}

MetaFitResult run_meta_fit(MetaLearner& method, DataSource meta_train, const MetaFitOptions& options) {
  MetaFitResult result;
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  if (method.mode() == DataMode::none) {
    result.learner = method.snapshot();
    return result;
  }
  if (source_mode(meta_train) != method.mode()) {
    throw ConfigError(method.method_id() + " meta-trains on " + mode_name(method.mode()) + " but was given " +
                      mode_name(source_mode(meta_train)));
  }
  if (options.validate_every > 0 && options.validation_tasks.empty()) {
    throw ConfigError("validation cadence set but no validation tasks given");
  }

  LearnerHandle best;
  for (std::size_t step = 0; step < options.iterations; ++step) {
    if (options.should_stop && options.should_stop()) {
      result.stopped_early = true;
      log("budget exhausted after " + std::to_string(step) + " of " + std::to_string(options.iterations) + " units");
      break;
    }
    if (auto* episodes = std::get_if<sample::EpisodeStream*>(&meta_train)) {
      auto task = (*episodes)->next();
      if (!task) {
        log("episode source exhausted after " + std::to_string(step) + " units");
        break;
      }
      method.train_on(*task);
    } else {
      method.train_on(std::get<sample::BatchStream*>(meta_train)->next());
    }
    result.steps = step + 1;
    if (options.validate_every > 0 && result.steps % options.validate_every == 0) {
      LearnerHandle candidate = method.snapshot();
      const double s = mean_normalized_accuracy(*candidate, options.validation_tasks);
      result.checkpoints.push_back({result.steps, s});
      log("checkpoint " + std::to_string(result.steps) + ": validation " + score::format_double(s));
      if (!result.selected || s > result.checkpoints[*result.selected].score) {
        result.selected = result.checkpoints.size() - 1;
        best = std::move(candidate);
      }
    }
  }
  result.learner = best ? best : LearnerHandle(method.snapshot());
  return result;
}

}  // namespace fewshot::api
