#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fewshot/baselines/baselines.hpp"
#include "fewshot/datastore/synth.hpp"
#include "fewshot/sampler/episode.hpp"

namespace fewshot::harness {

enum class Protocol { cross_domain, within_domain };
const char* protocol_name(Protocol p);
Protocol parse_protocol(const std::string& name);

// Meta-training and validation counts of one protocol.
struct Schedule {
  std::size_t meta_train_units = 0;  // tasks, or batches for batch learners
  std::size_t validate_every = 0;
  std::size_t validation_tasks = 0;
  int validation_queries = 20;
};

struct MetaTestPhase {
  std::size_t tasks_per_dataset = 0;
  double budget_seconds = 0.0;
};

namespace preset {
inline constexpr Schedule cross_domain{30000, 5000, 300, 20};
inline constexpr Schedule within_domain{4290, 750, 100, 20};
// Recorded for completeness; no implemented method uses it.
inline constexpr Schedule metadelta{0, 50, 50, 5};
inline constexpr MetaTestPhase feedback{100, 5.0 * 3600.0};
inline constexpr MetaTestPhase final_phase{600, 9.0 * 3600.0};
inline constexpr double desk_budget_seconds = 15.0 * 60.0;
inline constexpr std::array<double, 3> within_domain_fractions{0.70, 0.15, 0.15};
}  // namespace preset

// floor(n / scale), at least 1.
std::size_t scale_count(std::size_t n, double scale);
Schedule scaled(const Schedule& s, double scale);

struct PretrainConfig {
  data::SynthSpec corpus{.domains = 6, .classes = 20, .images_per_class = 40, .image_side = 32, .seed = 3,
                         .id_prefix = "pretrain"};
  std::size_t iterations = 1000;
  std::size_t batch_size = 32;
  double lr = 0.001;
};

struct DataConfig {
  std::string source = "synthetic";  // or "directory"
  // Cross-domain: meta-dataset roots for the train/valid pool and the test
  // pool. Within-domain: a single dataset root.
  std::filesystem::path train_dir, test_dir, dataset_dir;
  // Synthetic train/valid pool (or the single within-domain dataset).
  data::SynthSpec synth{.seed = 1};
  std::uint64_t synth_test_seed = 2;
};

struct RunConfig {
  Protocol protocol = Protocol::cross_domain;
  base::Method method = base::Method::prototypical_networks;
  std::string init = "random";  // or "pretrained"
  std::optional<std::filesystem::path> hyperparams_file;
  std::vector<std::pair<std::string, std::string>> hp_overrides;
  nd::BackboneSpec backbone;
  std::uint64_t seed = 0;
  std::size_t run_count = 3;
  double scale = 1.0;
  double budget_seconds = preset::desk_budget_seconds;
  std::filesystem::path out = "bench_out";
  std::size_t workers = 0;  // 0: hardware concurrency

  // Unset counts come from the protocol preset; all are then scaled.
  std::optional<std::size_t> meta_train_units, validate_every, validation_tasks;
  sample::EpisodeConfig meta_train_episode{.ways = 5, .shots = 10, .queries = 20};
  sample::EpisodeConfig validation_episode{.ways = 5, .shots = 5, .queries = 20};

  std::size_t tasks_per_dataset = preset::feedback.tasks_per_dataset;
  sample::EpisodeConfig test_episode{.ways = 5, .shots = 5, .queries = 20, .any_way_any_shot = true};

  PretrainConfig pretrain;
  DataConfig data;

  std::string submission_id;  // defaults to method/init/protocol
  std::int64_t timestamp = 0;
  std::string league = "meta-learning";

  Schedule schedule() const;
  base::Hyperparams hyperparams() const;
  std::string id() const;
  void validate() const;
};

// Flat JSON object; unknown keys and ill-typed values raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
// Effective configuration, without the output directory.
nlohmann::json to_json(const RunConfig& config);

data::SynthSpec parse_synth_spec(const nlohmann::json& doc);

}  // namespace fewshot::harness
