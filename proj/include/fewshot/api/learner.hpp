#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fewshot/ndcore/params.hpp"
#include "fewshot/sampler/episode.hpp"

namespace fewshot::api {

class Predictor {
 public:
  virtual ~Predictor() = default;
  // One probability row (N columns, summing to 1) per query image.
  virtual nd::Tensor predict(const sample::QuerySet& query) = 0;
};

class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string method_id() const = 0;
  // Const: every call works on a private copy of the learner state.
  virtual std::unique_ptr<Predictor> fit(const sample::SupportSet& support) const = 0;
  virtual void save(const std::filesystem::path& dir) const = 0;
  virtual void load(const std::filesystem::path& dir) = 0;
};

using LearnerHandle = std::shared_ptr<const Learner>;

enum class DataMode { none, episodes, batches };
const char* mode_name(DataMode mode);

// Exactly one kind of meta-training data; monostate means none.
using DataSource = std::variant<std::monostate, sample::EpisodeStream*, sample::BatchStream*>;
DataMode source_mode(const DataSource& source);

class MetaLearner {
 public:
  virtual ~MetaLearner() = default;
  virtual std::string method_id() const = 0;
  virtual DataMode mode() const = 0;
  // One meta-training unit; only the call matching mode() is supported.
  virtual void train_on(const sample::Task& task);
  virtual void train_on(const sample::Batch& batch);
  // Learner for the current meta-parameters.
  virtual std::unique_ptr<Learner> snapshot() const = 0;

  // Consumes the (bounded) training source and returns the final Learner.
  // The validation source is accepted for interface parity and unused; use
  // run_meta_fit for validation-based selection.
  std::unique_ptr<Learner> meta_fit(DataSource meta_train, DataSource meta_valid);
};

// Learner directory: manifest.txt (key=value lines, `method` and `seed`
// first), params.manifest, params.bin.
struct LearnerManifest {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> fields;

  const std::string& get(const std::string& key) const;  // FormatError if absent
};
void write_learner_dir(const std::filesystem::path& dir, const LearnerManifest& manifest, const nd::ParamSet& params);
std::pair<LearnerManifest, nd::ParamSet> read_learner_dir(const std::filesystem::path& dir);

struct TaskRun {
  std::optional<nd::Tensor> probs;  // empty when the learner failed
  double seconds = 0.0;
  std::string error;
  bool failed() const { return !probs.has_value(); }
};

// Fits on the support set and predicts the query set. The task's hidden
// query labels are never touched. Exceptions and malformed outputs (wrong
// shape, rows not summing to 1) become failures.
TaskRun run_task(const Learner& learner, const sample::Task& task);

struct Checkpoint {
  std::size_t step = 0;  // meta-training units consumed
  double score = 0.0;    // mean normalized accuracy on the validation tasks
};

struct MetaFitOptions {
  std::size_t iterations = 0;
  std::size_t validate_every = 0;  // 0 disables validation
  std::vector<sample::Task> validation_tasks;
  // Polled before each unit; returning true stops training cooperatively.
  std::function<bool()> should_stop;
  std::function<void(const std::string&)> log;
};

struct MetaFitResult {
  LearnerHandle learner;
  std::vector<Checkpoint> checkpoints;
  std::optional<std::size_t> selected;  // index into checkpoints
  std::size_t steps = 0;
  bool stopped_early = false;
};

// Drives meta-training, validates every `validate_every` units and returns
// the Learner of the best checkpoint (earliest on ties), or the latest
// state when no checkpoint was reached. Throws ConfigError when the source
// does not match the method's mode; methods with mode none return at once.
MetaFitResult run_meta_fit(MetaLearner& method, DataSource meta_train, const MetaFitOptions& options);

// Mean normalized accuracy of `learner` over `tasks`; failures score bac 0.
double mean_normalized_accuracy(const Learner& learner, const std::vector<sample::Task>& tasks);

}  // namespace fewshot::api
