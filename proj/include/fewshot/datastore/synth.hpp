#pragma once

#include <cstdint>
#include <string>

#include "fewshot/datastore/dataset.hpp"

namespace fewshot::data {

// Parametric image families standing in for real domains. Dataset d uses
// family (family_offset + d) % 6.
enum class Family { gratings, blobs, checkers, radial, spectral_noise, polygons };
inline constexpr std::size_t kFamilyCount = 6;
const char* family_name(Family family);

struct SynthSpec {
  std::size_t domains = 10;
  std::size_t classes = 10;
  std::size_t images_per_class = 40;
  std::size_t image_side = 32;
  std::uint64_t seed = 0;
  std::string id_prefix = "synth";
  std::size_t family_offset = 0;
};

// Requires domains >= 1, classes >= 2, images_per_class >= 21, side >= 16.
MetaDataset synth_meta_dataset(const SynthSpec& spec, Role role = Role::meta_train);

}  // namespace fewshot::data
