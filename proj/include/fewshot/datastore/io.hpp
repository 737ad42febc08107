#pragma once

#include <filesystem>

#include "fewshot/datastore/dataset.hpp"

namespace fewshot::data {

// 8-bit PNG, decoded to [0, 1].
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

// Directory layout:
//   <root>/images/*.png
//   <root>/labels.csv   header FILE_NAME,CATEGORY
//   <root>/info.json    optional {"dataset_id": ..., "domain_tag": ...}
// Classes are ordered by name; records keep labels.csv order.
Dataset load_dataset(const std::filesystem::path& root);
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);

// Every immediate subdirectory holding a labels.csv, in name order.
MetaDataset load_meta_dataset(const std::filesystem::path& root, Role role);
void write_meta_dataset(const MetaDataset& meta, const std::filesystem::path& root);

}  // namespace fewshot::data
