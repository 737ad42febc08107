#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fewshot/datastore/io.hpp"
#include "fewshot/error.hpp"
#include "fewshot/harness/budget.hpp"
#include "fewshot/harness/harness.hpp"

namespace fewshot::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<score::TaskScore> evaluate(const api::Learner& learner, std::size_t count, const TaskFactory& make_task,
                                       std::size_t workers) {
  std::vector<score::TaskScore> scores(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        const sample::Task task = make_task(i);
        const api::TaskRun run = api::run_task(learner, task);
        scores[i] = run.failed() ? score::failed_task(i, task.dataset_id, task.ways, task.shots)
                                 : score::score_task(i, task.dataset_id, task.ways, task.shots, *run.probs,
                                                     task.query_labels.reveal());
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(count, 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return scores;
}

TaskFactory per_dataset_tasks(const data::MetaDataset& meta, const sample::EpisodeConfig& config,
                              std::size_t tasks_per_dataset, const RngStream& rng) {
  // Single-dataset views share image storage with `meta`.
  auto views = std::make_shared<std::vector<data::MetaDataset>>();
  for (const auto& d : meta.datasets) views->push_back({{d}, data::Role::meta_test});
  return [views, config, tasks_per_dataset, rng](std::size_t index) {
    const auto& view = views->at(index / tasks_per_dataset);
    return sample::sample(view, config, rng, index);
  };
}

std::size_t within_domain_min_classes(int ways) {
  const auto need = static_cast<std::size_t>(std::max(ways, 2));
  for (std::size_t n = 2;; ++n) {
    const auto part = static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(n) + 1e-9));
    if (part >= need && 2 * part + 2 <= n) return n;
  }
}

namespace {

class EventLog {
 public:
  explicit EventLog(const fs::path& path) : out_(path, std::ios::app) {}
  void operator()(const std::string& msg) {
    std::lock_guard lock(mutex_);
    std::ostringstream line;
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    line << std::fixed << std::setprecision(1) << "[" << t << "s] " << msg;
    out_ << line.str() << '\n' << std::flush;
    std::cerr << line.str() << '\n';
  }

 private:
  std::ofstream out_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void check_side(const data::MetaDataset& meta, const nd::BackboneSpec& spec) {
  for (const auto& d : meta.datasets) {
    const auto& s = d.image_shape();
    if (s.height != spec.input_side || s.width != spec.input_side || s.channels != spec.channels) {
      throw ConfigError("dataset " + d.id() + " has " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                        "x" + std::to_string(s.channels) + " images but the backbone expects " +
                        std::to_string(spec.input_side) + "x" + std::to_string(spec.input_side) + "x" +
                        std::to_string(spec.channels));
    }
  }
}

std::optional<nd::ParamSet> maybe_pretrain(const RunConfig& config, EventLog& log) {
  if (config.init != "pretrained") return std::nullopt;
  const data::MetaDataset corpus = data::synth_meta_dataset(config.pretrain.corpus);
  const data::BatchPool pool = data::concat_for_batches(corpus);
  log("pretraining on " + std::to_string(pool.items.size()) + " images, " + std::to_string(pool.class_count) +
      " classes, " + std::to_string(config.pretrain.iterations) + " batches");
  nd::ParamSet p = base::pretrain_backbone(pool, config.backbone, config.pretrain.iterations,
                                           config.pretrain.batch_size, config.pretrain.lr, config.seed);
  log("pretraining done");
  return p;
}

struct Splits {
  data::MetaDataset train, valid, test;
};

json fit_json(const api::MetaFitResult& fit) {
  json cps = json::array();
  for (const auto& c : fit.checkpoints) cps.push_back({{"step", c.step}, {"score", c.score}});
  json j{{"steps", fit.steps}, {"stopped_early", fit.stopped_early}, {"checkpoints", cps}};
  j["selected_step"] = fit.selected ? json(fit.checkpoints[*fit.selected].step) : json(nullptr);
  return j;
}

RunResult run_once(const RunConfig& config, std::size_t r, const Splits& splits,
                   const std::optional<nd::ParamSet>& pretrained, EventLog& log) {
  RunResult result;
  result.seed = config.seed + r;
  const std::uint64_t seed = result.seed;
  const fs::path dir = config.out / ("run_" + std::to_string(r));
  fs::create_directories(dir);

  const data::BatchPool pool = data::concat_for_batches(splits.train);
  base::MethodConfig mc{.method = config.method,
                        .hp = config.hyperparams(),
                        .backbone = config.backbone,
                        .seed = seed,
                        .pretrained = pretrained,
                        .global_classes = pool.class_count};
  auto method = base::make_meta_learner(mc);
  const Schedule schedule = config.schedule();

  BudgetClock clock(config.budget_seconds);
  api::MetaFitOptions options;
  options.iterations = schedule.meta_train_units;
  options.validate_every = schedule.validate_every;
  const RngStream valid_rng(seed, {"meta-valid", "tasks", 0});
  if (method->mode() != api::DataMode::none) {
    for (std::size_t i = 0; i < schedule.validation_tasks; ++i) {
      options.validation_tasks.push_back(sample::sample(splits.valid, config.validation_episode, valid_rng, i));
    }
  }
  options.should_stop = [&clock] { return clock.exhausted(); };
  options.log = [&log, r](const std::string& m) { log("run " + std::to_string(r) + ": " + m); };

  log("run " + std::to_string(r) + ": seed " + std::to_string(seed) + ", " + std::string(base::method_id(config.method)) +
      " meta-training on " + api::mode_name(method->mode()));
  std::optional<sample::EpisodeStream> episodes;
  std::optional<sample::BatchStream> batches;
  api::DataSource source;
  if (method->mode() == api::DataMode::episodes) {
    episodes.emplace(splits.train, config.meta_train_episode, schedule.meta_train_units,
                     RngStream(seed, {"meta-train", "tasks", 0}));
    source = &*episodes;
  } else if (method->mode() == api::DataMode::batches) {
    batches.emplace(pool, static_cast<std::size_t>(mc.hp.batch_size), RngStream(seed, {"meta-train", "batches", 0}));
    source = &*batches;
  }
  result.fit = api::run_meta_fit(*method, source, options);
  result.budget_exhausted = result.fit.stopped_early;
  if (result.budget_exhausted) {
    log("run " + std::to_string(r) + ": budget of " + std::to_string(config.budget_seconds) +
        "s exhausted; using the best learner so far");
  }
  log("run " + std::to_string(r) + ": meta-training done after " + std::to_string(clock.mark("meta-train")) + "s");

  const std::size_t count = config.tasks_per_dataset * splits.test.size();
  const TaskFactory make = per_dataset_tasks(splits.test, config.test_episode, config.tasks_per_dataset,
                                             RngStream(seed, {"meta-test", "tasks", 0}));
  result.scores = evaluate(*result.fit.learner, count, make, config.workers);
  result.aggregate = score::aggregate(result.scores);
  log("run " + std::to_string(r) + ": meta-test on " + std::to_string(count) + " tasks, mean normalized accuracy " +
      score::format_double(result.aggregate.overall.mean) + ", " + std::to_string(clock.mark("meta-test")) + "s");

  score::write_tasks_csv(result.scores, dir / "tasks.csv");
  json summary = score::run_summary(result.aggregate);
  summary["run"] = r;
  summary["seed"] = seed;
  summary["meta_fit"] = fit_json(result.fit);
  summary["splits"] = {{"meta_train", json::array()}, {"meta_valid", json::array()}, {"meta_test", json::array()}};
  for (const auto& d : splits.train.datasets) summary["splits"]["meta_train"].push_back(d.id());
  for (const auto& d : splits.valid.datasets) summary["splits"]["meta_valid"].push_back(d.id());
  for (const auto& d : splits.test.datasets) summary["splits"]["meta_test"].push_back(d.id());
  score::write_json(summary, dir / "summary.json");
  result.fit.learner->save(dir / "learner");
  return result;
}

ProtocolResult finish(const RunConfig& config, std::vector<RunResult> runs) {
  ProtocolResult out;
  out.submission = {config.id(), config.timestamp, config.league, {}};
  for (const auto& r : runs) {
    out.submission.run_means.push_back(r.aggregate.overall.mean);
    out.budget_exhausted = out.budget_exhausted || r.budget_exhausted;
  }
  out.runs = std::move(runs);

  const double worst = *std::min_element(out.submission.run_means.begin(), out.submission.run_means.end());
  json gates = json::object();
  for (const char* league : {"free-style", "meta-learning"}) {
    gates[league] = {{"threshold", *score::league_threshold(league)}, {"passed", score::league_gate(worst, league)}};
  }
  json doc{{"schema_version", score::kSchemaVersion},
           {"id", out.submission.id},
           {"timestamp", out.submission.timestamp},
           {"league", out.submission.league},
           {"config", to_json(config)},
           {"run_means", out.submission.run_means},
           {"score", worst},
           {"gates", gates},
           {"budget_exhausted", out.budget_exhausted}};
  score::write_json(doc, config.out / "summary.json");
  return out;
}

data::MetaDataset load_pool(const RunConfig& config, const fs::path& dir, std::uint64_t synth_seed,
                            const std::string& prefix, data::Role role) {
  if (config.data.source == "directory") {
    if (dir.empty()) throw ConfigError("directory data source needs its data_*_dir keys");
    return data::load_meta_dataset(dir, role);
  }
  data::SynthSpec spec = config.data.synth;
  spec.seed = synth_seed;
  spec.id_prefix = prefix;
  return data::synth_meta_dataset(spec, role);
}

}  // namespace

ProtocolResult run_cross_domain(const RunConfig& config) {
  config.validate();
  if (config.protocol != Protocol::cross_domain) throw ConfigError("run_cross_domain needs protocol cross-domain");
  fs::create_directories(config.out);
  EventLog log(config.out / "events.log");

  const data::MetaDataset set0 =
      load_pool(config, config.data.train_dir, config.data.synth.seed, "set0", data::Role::meta_train);
  data::MetaDataset set1 =
      load_pool(config, config.data.test_dir, config.data.synth_test_seed, "set1", data::Role::meta_test);
  if (set0.size() < 2) throw ConfigError("cross-domain needs at least 2 meta-training datasets");
  check_side(set0, config.backbone);
  check_side(set1, config.backbone);
  const std::size_t n_valid = std::max<std::size_t>(1, set0.size() * 3 / 10);
  const std::size_t n_train = set0.size() - n_valid;
  log("cross-domain: " + std::to_string(n_train) + " meta-train, " + std::to_string(n_valid) + " meta-valid, " +
      std::to_string(set1.size()) + " meta-test datasets");

  const auto pretrained = maybe_pretrain(config, log);
  std::vector<RunResult> runs;
  for (std::size_t r = 0; r < config.run_count; ++r) {
    auto [train, valid] = data::split_datasets(set0, {n_train, n_valid}, config.seed + r);
    Splits splits{std::move(train), std::move(valid), set1};
    runs.push_back(run_once(config, r, splits, pretrained, log));
  }
  return finish(config, std::move(runs));
}

ProtocolResult run_within_domain(const RunConfig& config) {
  config.validate();
  if (config.protocol != Protocol::within_domain) throw ConfigError("run_within_domain needs protocol within-domain");
  fs::create_directories(config.out);
  EventLog log(config.out / "events.log");

  data::Dataset dataset = [&] {
    if (config.data.source == "directory") {
      if (config.data.dataset_dir.empty()) throw ConfigError("within-domain directory source needs data_dataset_dir");
      return data::load_dataset(config.data.dataset_dir);
    }
    const data::MetaDataset meta = load_pool(config, {}, config.data.synth.seed, "within", data::Role::meta_train);
    if (meta.size() != 1) throw ConfigError("within-domain uses exactly one dataset; set synth_domains to 1");
    return meta.datasets.front();
  }();
  check_side({{dataset}}, config.backbone);
  const std::size_t need =
      within_domain_min_classes(std::max(config.test_episode.ways, config.validation_episode.ways));
  if (dataset.class_count() < need) {
    throw ConfigError("dataset " + dataset.id() + " has " + std::to_string(dataset.class_count()) +
                      " classes; the 70/15/15 within-domain split needs at least " + std::to_string(need) +
                      " for 5-way validation and meta-test tasks");
  }
  log("within-domain: dataset " + dataset.id() + " with " + std::to_string(dataset.class_count()) + " classes");

  const auto pretrained = maybe_pretrain(config, log);
  std::vector<RunResult> runs;
  for (std::size_t r = 0; r < config.run_count; ++r) {
    auto parts = data::split_classes(dataset, preset::within_domain_fractions, config.seed + r);
    Splits splits{{{parts[0]}, data::Role::meta_train},
                  {{parts[1]}, data::Role::meta_valid},
                  {{parts[2]}, data::Role::meta_test}};
    runs.push_back(run_once(config, r, splits, pretrained, log));
  }
  return finish(config, std::move(runs));
}

ProtocolResult run_protocol(const RunConfig& config) {
  return config.protocol == Protocol::cross_domain ? run_cross_domain(config) : run_within_domain(config);
}

}  // namespace fewshot::harness
