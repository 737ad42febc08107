#include "fewshot/sampler/episode.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "fewshot/error.hpp"

namespace fewshot::sample {

namespace {

std::string describe(int n, int k, int q) {
  return "N=" + std::to_string(n) + ", k=" + std::to_string(k) + ", q=" + std::to_string(q);
}

// Classes of `d` holding at least `need` records, in class order.
std::vector<std::size_t> usable_classes(const data::Dataset& d, std::size_t need) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < d.class_count(); ++c) {
    if (d.records(c).size() >= need) out.push_back(c);
  }
  return out;
}

bool eligible(const data::Dataset& d, int n, int k, int q) {
  return usable_classes(d, static_cast<std::size_t>(k + q)).size() >= static_cast<std::size_t>(n);
}

Task draw_from(const data::Dataset& d, int n, int k, int q, RngStream& rng, std::size_t task_index) {
  std::vector<std::size_t> classes = usable_classes(d, static_cast<std::size_t>(k + q));
  rng.shuffle(std::span(classes));
  classes.resize(static_cast<std::size_t>(n));

  Task task;
  task.task_index = task_index;
  task.dataset_id = d.id();
  task.class_map = classes;
  task.ways = n;
  task.shots = k;
  task.queries = q;
  task.support.ways = n;
  task.support.shots = k;
  task.query.ways = n;

  std::vector<std::pair<RecordRef, int>> query;
  for (int label = 0; label < n; ++label) {
    const std::size_t cls = classes[static_cast<std::size_t>(label)];
    std::vector<std::size_t> idx(d.records(cls).size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(std::span(idx));
    for (int i = 0; i < k; ++i) {
      const RecordRef ref{cls, idx[static_cast<std::size_t>(i)]};
      task.support_refs.push_back(ref);
      task.support.images.push_back(d.records(cls)[ref.record].image);
      task.support.labels.push_back(label);
    }
    for (int i = k; i < k + q; ++i) query.emplace_back(RecordRef{cls, idx[static_cast<std::size_t>(i)]}, label);
  }
  rng.shuffle(std::span(query));
  std::vector<int> labels;
  for (const auto& [ref, label] : query) {
    task.query_refs.push_back(ref);
    task.query.images.push_back(d.records(ref.cls)[ref.record].image);
    labels.push_back(label);
  }
  task.query_labels = HiddenLabels(std::move(labels));
  task.support.seed = mix64(rng.next_u64());
  return task;
}

}  // namespace

void EpisodeConfig::validate() const {
  if (queries < 1) throw ConfigError("queries per class must be >= 1");
  if (any_way_any_shot) {
    if (way_range.lo < 2 || way_range.hi < way_range.lo) throw ConfigError("way range must satisfy 2 <= lo <= hi");
    if (shot_range.lo < 1 || shot_range.hi < shot_range.lo) throw ConfigError("shot range must satisfy 1 <= lo <= hi");
  } else {
    if (ways < 2) throw ConfigError("ways must be >= 2");
    if (shots < 1) throw ConfigError("shots must be >= 1");
  }
}

Task sample_task(const data::MetaDataset& meta, const EpisodeConfig& config, const RngStream& rng,
                 std::size_t task_index) {
  config.validate();
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (eligible(meta.datasets[i], config.ways, config.shots, config.queries)) ok.push_back(i);
  }
  if (ok.empty()) {
    throw InfeasibleTaskError("no dataset can supply a task with " + describe(config.ways, config.shots, config.queries));
  }
  RngStream local = rng.child("task", task_index);
  const data::Dataset& d = meta.datasets[ok[local.index(ok.size())]];
  return draw_from(d, config.ways, config.shots, config.queries, local, task_index);
}

Task sample_any_way_any_shot(const data::MetaDataset& meta, const EpisodeConfig& config, const RngStream& rng,
                             std::size_t task_index) {
  config.validate();
  const int q = config.queries;
  const int min_n = config.way_range.lo, min_k = config.shot_range.lo;
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (eligible(meta.datasets[i], min_n, min_k, q)) ok.push_back(i);
  }
  if (ok.empty()) throw InfeasibleTaskError("no dataset can supply a task with " + describe(min_n, min_k, q));

  RngStream local = rng.child("task", task_index);
  const data::Dataset& d = meta.datasets[ok[local.index(ok.size())]];

  const auto usable = usable_classes(d, static_cast<std::size_t>(min_k + q));
  const int n = static_cast<int>(
      local.uniform_int(min_n, std::min<long>(config.way_range.hi, static_cast<long>(usable.size()))));
  // With N fixed, k can grow until fewer than N classes hold k+q records.
  std::vector<std::size_t> sizes;
  for (std::size_t c = 0; c < d.class_count(); ++c) sizes.push_back(d.records(c).size());
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  const long k_cap = static_cast<long>(sizes[static_cast<std::size_t>(n - 1)]) - q;
  const int k = static_cast<int>(local.uniform_int(min_k, std::min<long>(config.shot_range.hi, k_cap)));
  return draw_from(d, n, k, q, local, task_index);
}

Task sample(const data::MetaDataset& meta, const EpisodeConfig& config, const RngStream& rng, std::size_t task_index) {
  return config.any_way_any_shot ? sample_any_way_any_shot(meta, config, rng, task_index)
                                 : sample_task(meta, config, rng, task_index);
}

EpisodeStream::EpisodeStream(const data::MetaDataset& meta, EpisodeConfig config, std::size_t count, RngStream rng)
    : meta_(&meta), config_(config), count_(count), rng_(std::move(rng)) {
  config_.validate();
}

std::optional<Task> EpisodeStream::next() {
  if (count_ != kUnlimited && next_index_ >= count_) return std::nullopt;
  return sample(*meta_, config_, rng_, next_index_++);
}

BatchStream::BatchStream(const data::BatchPool& pool, std::size_t batch_size, RngStream rng)
    : pool_(&pool), batch_size_(batch_size), rng_(std::move(rng)) {
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
  if (batch_size_ > pool.items.size()) {
    throw ConfigError("batch size " + std::to_string(batch_size_) + " exceeds pool size " +
                      std::to_string(pool.items.size()));
  }
  order_.resize(pool.items.size());
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  RngStream epoch_rng = rng_.child("epoch", epoch_);
  epoch_rng.shuffle(std::span(order_));
  cursor_ = 0;
}

Batch BatchStream::next() {
  if (cursor_ + batch_size_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  Batch batch;
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const data::PoolItem& item = pool_->items[order_[cursor_++]];
    batch.images.push_back(item.image);
    batch.labels.push_back(item.label);
  }
  return batch;
}

}  // namespace fewshot::sample
