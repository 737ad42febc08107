#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewshot/scoring/metrics.hpp"

namespace fewshot::score {

inline constexpr int kSchemaVersion = 1;

struct TaskScore {
  std::size_t task_index = 0;
  std::string dataset_id;
  int ways = 0;
  int shots = 0;
  double bac = 0.0;
  double normalized = 0.0;
  bool failed = false;
};

// Scores one task from probability rows. A failed task gets bac 0.
TaskScore score_task(std::size_t task_index, const std::string& dataset_id, int ways, int shots,
                     const nd::Tensor& probs, std::span<const int> truth);
TaskScore failed_task(std::size_t task_index, const std::string& dataset_id, int ways, int shots);

struct Stat {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<ConfidenceInterval> ci;  // present when n >= 2
};

struct Aggregate {
  Stat overall;
  std::map<std::string, Stat> per_dataset;
  std::map<int, Stat> per_ways;
  std::map<int, Stat> per_shots;
  std::size_t failed = 0;
};

// Sums in ascending task_index order so results are bit-reproducible.
Aggregate aggregate(std::vector<TaskScore> scores);

// Entry thresholds; leagues without a gate return nullopt.
std::optional<double> league_threshold(const std::string& league);
// Strictly above the threshold passes.
bool league_gate(double mean, const std::string& league);

struct SubmissionResult {
  std::string id;
  std::int64_t timestamp = 0;  // earlier submissions win exact ties
  std::string league = "meta-learning";
  std::vector<double> run_means;
};

struct RankedSubmission {
  std::size_t rank = 0;  // 1-based
  std::string id;
  double score = 0.0;  // worst run
  std::int64_t timestamp = 0;
};

// Orders by worst-of-three run mean, descending; exact ties by timestamp.
std::vector<RankedSubmission> final_rank(const std::vector<SubmissionResult>& submissions);

// tasks.csv: task_index,dataset_id,N,k,bac,normalized
void write_tasks_csv(const std::vector<TaskScore>& scores, const std::filesystem::path& path);
std::vector<TaskScore> read_tasks_csv(const std::filesystem::path& path);

nlohmann::json to_json(const Stat& stat);
nlohmann::json to_json(const Aggregate& agg);
// Single-run report body with schema_version, aggregates and gate verdicts.
nlohmann::json run_summary(const Aggregate& agg);

std::string format_double(double v);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace fewshot::score
