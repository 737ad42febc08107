#include "fewshot/datastore/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::data {

Dataset::Dataset(std::string id, std::string domain_tag, std::vector<std::string> classes,
                 std::vector<std::vector<ImageRecord>> records)
    : id_(std::move(id)), domain_tag_(std::move(domain_tag)), classes_(std::move(classes)),
      records_(std::move(records)) {
  if (classes_.size() < 2) throw ConfigError("dataset " + id_ + " needs at least 2 classes");
  if (records_.size() != classes_.size()) throw ConfigError("dataset " + id_ + ": records/classes mismatch");
  if (std::set<std::string>(classes_.begin(), classes_.end()).size() != classes_.size()) {
    throw ConfigError("dataset " + id_ + " has duplicate class names");
  }
  bool first = true;
  for (std::size_t c = 0; c < records_.size(); ++c) {
    if (records_[c].empty()) throw ConfigError("dataset " + id_ + ": class '" + classes_[c] + "' has no records");
    for (const auto& r : records_[c]) {
      if (!r.image) throw ConfigError("dataset " + id_ + ": record without image");
      if (r.label != c) throw ConfigError("dataset " + id_ + ": record label disagrees with its class");
      const auto& s = r.image->shape();
      if (s.size() != 3 || s[2] != 3) {
        throw ShapeError("dataset " + id_ + ": image " + r.file + " has shape " + nd::shape_string(s) +
                         ", expected HxWx3");
      }
      ImageShape shape{s[0], s[1], s[2]};
      if (first) {
        shape_ = shape;
        first = false;
      } else if (!(shape == shape_)) {
        throw ShapeError("dataset " + id_ + ": image " + r.file + " has shape " + nd::shape_string(s) +
                         ", others are " + std::to_string(shape_.height) + "x" + std::to_string(shape_.width) +
                         "x3");
      }
    }
  }
}

std::size_t Dataset::record_count() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.size();
  return n;
}

Dataset Dataset::class_subset(const std::vector<std::size_t>& class_indices, std::string id) const {
  std::vector<std::string> names;
  std::vector<std::vector<ImageRecord>> recs;
  for (std::size_t i = 0; i < class_indices.size(); ++i) {
    const std::size_t src = class_indices[i];
    names.push_back(classes_.at(src));
    auto copy = records_.at(src);
    for (auto& r : copy) r.label = i;
    recs.push_back(std::move(copy));
  }
  return Dataset(std::move(id), domain_tag_, std::move(names), std::move(recs));
}

const char* role_name(Role role) {
  switch (role) {
    case Role::meta_train:
      return "meta-train";
    case Role::meta_valid:
      return "meta-valid";
    case Role::meta_test:
      return "meta-test";
  }
  return "?";
}

void MetaDataset::validate() const {
  if (datasets.empty()) throw ConfigError(std::string("empty ") + role_name(role) + " meta-dataset");
  std::set<std::string> ids;
  for (const auto& d : datasets) {
    if (!ids.insert(d.id()).second) throw ConfigError("duplicate dataset id " + d.id());
  }
}

BatchPool concat_for_batches(const MetaDataset& meta) {
  meta.validate();
  BatchPool pool;
  for (const auto& d : meta.datasets) {
    pool.label_offsets.push_back(pool.class_count);
    for (std::size_t c = 0; c < d.class_count(); ++c) {
      for (const auto& r : d.records(c)) {
        pool.items.push_back({r.image, static_cast<int>(pool.class_count + c)});
      }
    }
    pool.class_count += d.class_count();
  }
  return pool;
}

nd::Tensor stack_nchw(std::span<const ImagePtr> images) {
  if (images.empty()) throw ShapeError("cannot stack an empty image list");
  const nd::Shape s = images.front()->shape();
  if (s.size() != 3) throw ShapeError("expected H x W x C image, got " + nd::shape_string(s));
  const std::size_t h = s[0], w = s[1], ch = s[2];
  nd::Tensor out({images.size(), ch, h, w});
  auto dst = out.data();
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b]->shape() != s) {
      throw ShapeError("cannot stack " + nd::shape_string(images[b]->shape()) + " with " + nd::shape_string(s));
    }
    const auto src = images[b]->data();
    double* base = dst.data() + b * ch * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < ch; ++c) base[(c * h + y) * w + x] = src[(y * w + x) * ch + c];
      }
    }
  }
  return out;
}

std::array<Dataset, 3> split_classes(const Dataset& dataset, std::array<double, 3> fractions,
                                     std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  const std::size_t n = dataset.class_count();
  // The epsilon absorbs representation error such as 0.15 * 20 = 3.0000000000000004
  // or 0.7 * 10 = 6.999999999999999.
  auto count = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
  const std::size_t valid = count(fractions[1]);
  const std::size_t test = count(fractions[2]);
  // Each view is itself a Dataset, which needs at least two classes.
  if (valid < 2 || test < 2 || valid + test + 2 > n) {
    throw ConfigError("dataset " + dataset.id() + " has " + std::to_string(n) +
                      " classes, too few for a three-way class split with 2+ classes per split");
  }
  const std::size_t train = n - valid - test;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, {"split", "classes:" + dataset.id(), 0});
  rng.shuffle(std::span(order));

  auto take = [&](std::size_t begin, std::size_t len) {
    std::vector<std::size_t> part(order.begin() + static_cast<long>(begin),
                                  order.begin() + static_cast<long>(begin + len));
    std::sort(part.begin(), part.end());
    return part;
  };
  return {dataset.class_subset(take(0, train), dataset.id() + "/meta-train"),
          dataset.class_subset(take(train, valid), dataset.id() + "/meta-valid"),
          dataset.class_subset(take(train + valid, test), dataset.id() + "/meta-test")};
}

std::pair<MetaDataset, MetaDataset> split_datasets(const MetaDataset& meta, std::array<std::size_t, 2> counts,
                                                   std::uint64_t seed) {
  meta.validate();
  if (counts[0] + counts[1] != meta.size()) {
    throw ConfigError("dataset split " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) +
                      " does not match " + std::to_string(meta.size()) + " datasets");
  }
  if (counts[0] == 0) throw ConfigError("meta-train split must contain at least one dataset");
  if (counts[1] == 0) throw ConfigError("meta-valid split must contain at least one dataset");

  std::vector<std::size_t> order(meta.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, {"split", "datasets", 0});
  rng.shuffle(std::span(order));
  std::sort(order.begin(), order.begin() + static_cast<long>(counts[0]));
  std::sort(order.begin() + static_cast<long>(counts[0]), order.end());

  MetaDataset train{{}, Role::meta_train};
  MetaDataset valid{{}, Role::meta_valid};
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < counts[0] ? train : valid).datasets.push_back(meta.datasets[order[i]]);
  }
  return {std::move(train), std::move(valid)};
}

}  // namespace fewshot::data
