#include "support/fixtures.hpp"

#include "fewshot/rng.hpp"

namespace fewshot::testkit {

data::Dataset toy_dataset(const std::string& id, std::size_t classes, std::size_t per_class, std::size_t side,
                          std::uint64_t seed) {
  RngStream rng(seed, {"toy", id, 0});
  std::vector<std::string> names;
  std::vector<std::vector<data::ImageRecord>> records(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    names.push_back("class" + std::to_string(c));
    for (std::size_t i = 0; i < per_class; ++i) {
      data::Image img({side, side, 3});
      for (double& v : img.data()) v = rng.uniform();
      records[c].push_back({std::make_shared<const data::Image>(std::move(img)), c, {}});
    }
  }
  return data::Dataset(id, "toy", std::move(names), std::move(records));
}

data::MetaDataset toy_meta(std::size_t datasets, std::size_t classes, std::size_t per_class, std::size_t side,
                           std::uint64_t seed, const std::string& prefix) {
  data::MetaDataset meta;
  for (std::size_t d = 0; d < datasets; ++d) {
    meta.datasets.push_back(toy_dataset(prefix + std::to_string(d), classes, per_class, side, seed + d));
  }
  return meta;
}

}  // namespace fewshot::testkit
