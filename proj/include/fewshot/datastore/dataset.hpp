#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fewshot/ndcore/tensor.hpp"

namespace fewshot::data {

// H x W x 3 image with values in [0, 1].
using Image = nd::Tensor;
using ImagePtr = std::shared_ptr<const Image>;

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;

  bool operator==(const ImageShape&) const = default;
};

struct ImageRecord {
  ImagePtr image;
  std::size_t label = 0;  // class index within the owning dataset
  std::string file;       // file name under images/, empty for in-memory records
};

// One image classification dataset. Immutable once constructed; views
// created by class_subset() share image storage with their parent.
class Dataset {
 public:
  // Validates: >= 2 classes, unique names, >= 1 record per class, a single
  // image shape, and labels consistent with class positions.
  Dataset(std::string id, std::string domain_tag, std::vector<std::string> classes,
          std::vector<std::vector<ImageRecord>> records);

  const std::string& id() const { return id_; }
  const std::string& domain_tag() const { return domain_tag_; }
  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t class_count() const { return classes_.size(); }
  const std::vector<ImageRecord>& records(std::size_t cls) const { return records_.at(cls); }
  std::size_t record_count() const;
  const ImageShape& image_shape() const { return shape_; }

  // Dataset restricted to `class_indices` (in the given order), relabelled
  // 0..n-1; `id` names the view.
  Dataset class_subset(const std::vector<std::size_t>& class_indices, std::string id) const;

 private:
  std::string id_;
  std::string domain_tag_;
  std::vector<std::string> classes_;
  std::vector<std::vector<ImageRecord>> records_;
  ImageShape shape_;
};

enum class Role { meta_train, meta_valid, meta_test };
const char* role_name(Role role);

struct MetaDataset {
  std::vector<Dataset> datasets;
  Role role = Role::meta_train;

  // Non-empty, unique dataset ids.
  void validate() const;
  std::size_t size() const { return datasets.size(); }
};

// Flat example pool for batch training; labels live in the disjoint union
// of all class sets (dataset order, then class order).
struct PoolItem {
  ImagePtr image;
  int label = 0;
};

struct BatchPool {
  std::vector<PoolItem> items;
  std::size_t class_count = 0;
  std::vector<std::size_t> label_offsets;  // first global label of each dataset
};

BatchPool concat_for_batches(const MetaDataset& meta);

// Stacks H x W x C images into one B x C x H x W tensor.
nd::Tensor stack_nchw(std::span<const ImagePtr> images);

// Class-disjoint views with per-split counts floor(fraction * C); the
// remainder goes to the first (meta-train) split.
std::array<Dataset, 3> split_classes(const Dataset& dataset, std::array<double, 3> fractions,
                                     std::uint64_t seed);

// Random dataset-level partition into (meta-train, meta-valid).
std::pair<MetaDataset, MetaDataset> split_datasets(const MetaDataset& meta, std::array<std::size_t, 2> counts,
                                                   std::uint64_t seed);

}  // namespace fewshot::data
