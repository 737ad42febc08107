#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewshot/api/learner.hpp"
#include "fewshot/harness/config.hpp"
#include "fewshot/scoring/report.hpp"

namespace fewshot::harness {

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<score::TaskScore> scores;
  score::Aggregate aggregate;
  api::MetaFitResult fit;
  bool budget_exhausted = false;
};

struct ProtocolResult {
  std::vector<RunResult> runs;
  score::SubmissionResult submission;
  bool budget_exhausted = false;
};

using TaskFactory = std::function<sample::Task(std::size_t)>;

// Runs `learner` on tasks 0..count-1 across `workers` threads and returns
// their scores in index order.
std::vector<score::TaskScore> evaluate(const api::Learner& learner, std::size_t count, const TaskFactory& make_task,
                                       std::size_t workers);

// Meta-test task factory: tasks_per_dataset tasks for each dataset in turn.
TaskFactory per_dataset_tasks(const data::MetaDataset& meta, const sample::EpisodeConfig& config,
                              std::size_t tasks_per_dataset, const RngStream& rng);

// Any-way any-shot tasks over a 7/3 split of the train pool; writes
// run_<i>/{tasks.csv,summary.json,learner/} and summary.json under out.
ProtocolResult run_cross_domain(const RunConfig& config);
// 70/15/15 class split of one dataset; meta-test tasks are 5-way 5-shot.
ProtocolResult run_within_domain(const RunConfig& config);
ProtocolResult run_protocol(const RunConfig& config);

// Smallest class count whose within-domain split leaves `ways` classes in
// both the validation and the test part.
std::size_t within_domain_min_classes(int ways);

// Spearman correlation of bucket mean against bucket key (N or k);
// nullopt with fewer than two buckets.
std::optional<double> bucket_trend(const std::map<int, score::Stat>& buckets);

// Matrix file: {"base": {...RunConfig...}, "cells": [{...}, ...], "out": dir}.
// Each cell overrides base keys and must name a distinct (method, init).
nlohmann::json compare_conditions(const nlohmann::json& matrix);

}  // namespace fewshot::harness
