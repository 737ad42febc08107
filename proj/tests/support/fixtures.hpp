#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "fewshot/datastore/dataset.hpp"

namespace fewshot::testkit {

// Random-pixel datasets "<prefix><d>" with `classes` classes of `per_class`
// side x side images each. Cheap to build; no structure to learn.
data::MetaDataset toy_meta(std::size_t datasets, std::size_t classes, std::size_t per_class, std::size_t side = 4,
                           std::uint64_t seed = 1, const std::string& prefix = "toy");

data::Dataset toy_dataset(const std::string& id, std::size_t classes, std::size_t per_class, std::size_t side = 4,
                          std::uint64_t seed = 1);

}  // namespace fewshot::testkit
