#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fewshot/datastore/dataset.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::sample {

struct IntRange {
  int lo = 0;
  int hi = 0;
  bool operator==(const IntRange&) const = default;
};

struct EpisodeConfig {
  int ways = 5;
  int shots = 5;
  int queries = 20;
  // When set, each task draws (N, k) uniformly from the ranges below,
  // clipped to what the chosen dataset can supply.
  bool any_way_any_shot = false;
  IntRange way_range{2, 20};
  IntRange shot_range{1, 20};

  void validate() const;
  bool operator==(const EpisodeConfig&) const = default;
};

struct SupportSet {
  std::vector<data::ImagePtr> images;  // label-major: k examples of class 0, then class 1, ...
  std::vector<int> labels;
  int ways = 0;
  int shots = 0;
  std::uint64_t seed = 0;  // per-task seed for any randomness inside fit()
};

// Query images only; their labels are held apart in HiddenLabels.
struct QuerySet {
  std::vector<data::ImagePtr> images;
  int ways = 0;
};

// Query labels with an access counter, so tests can assert that nothing on
// the fit/predict path reads them.
class HiddenLabels {
 public:
  HiddenLabels() = default;
  explicit HiddenLabels(std::vector<int> labels) : labels_(std::move(labels)) {}
  const std::vector<int>& reveal() const {
    ++reads_;
    return labels_;
  }
  std::size_t size() const { return labels_.size(); }
  std::size_t reads() const { return reads_; }

 private:
  std::vector<int> labels_;
  mutable std::size_t reads_ = 0;
};

struct RecordRef {
  std::size_t cls = 0;     // class index in the source dataset
  std::size_t record = 0;  // record index within that class
  bool operator==(const RecordRef&) const = default;
  auto operator<=>(const RecordRef&) const = default;
};

struct Task {
  std::size_t task_index = 0;
  std::string dataset_id;
  std::vector<std::size_t> class_map;  // episode label -> source class index
  int ways = 0;
  int shots = 0;
  int queries = 0;
  SupportSet support;
  QuerySet query;
  HiddenLabels query_labels;
  std::vector<RecordRef> support_refs;  // parallel to support.images
  std::vector<RecordRef> query_refs;    // parallel to query.images
};

// Draws task `task_index` from the stream `rng`; the result depends only on
// (rng seed and key, task_index), never on previously drawn tasks.
// Throws InfeasibleTaskError if no dataset has N classes with k+q records.
Task sample_task(const data::MetaDataset& meta, const EpisodeConfig& config, const RngStream& rng,
                 std::size_t task_index);

// Dataset uniform, then N uniform over way_range clipped to the dataset's
// usable classes, then k uniform over shot_range clipped so k+q fits.
Task sample_any_way_any_shot(const data::MetaDataset& meta, const EpisodeConfig& config, const RngStream& rng,
                             std::size_t task_index);

// Dispatches on config.any_way_any_shot.
Task sample(const data::MetaDataset& meta, const EpisodeConfig& config, const RngStream& rng, std::size_t task_index);

inline constexpr std::size_t kUnlimited = static_cast<std::size_t>(-1);

// Lazily yields tasks with consecutive indices starting at 0.
class EpisodeStream {
 public:
  EpisodeStream(const data::MetaDataset& meta, EpisodeConfig config, std::size_t count, RngStream rng);

  std::optional<Task> next();
  std::size_t produced() const { return next_index_; }
  std::size_t count() const { return count_; }
  const EpisodeConfig& config() const { return config_; }

 private:
  const data::MetaDataset* meta_;
  EpisodeConfig config_;
  std::size_t count_;
  RngStream rng_;
  std::size_t next_index_ = 0;
};

struct Batch {
  std::vector<data::ImagePtr> images;
  std::vector<int> labels;  // global labels
};

// Unbounded stream of batches drawn without replacement within an epoch.
// An epoch ends when fewer than batch_size unseen examples remain; the pool
// is then reshuffled.
class BatchStream {
 public:
  BatchStream(const data::BatchPool& pool, std::size_t batch_size, RngStream rng);

  Batch next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batch_size() const { return batch_size_; }
  std::size_t class_count() const { return pool_->class_count; }

 private:
  void reshuffle();

  const data::BatchPool* pool_;
  std::size_t batch_size_;
  RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace fewshot::sample
