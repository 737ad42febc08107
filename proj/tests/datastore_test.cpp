#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "fewshot/datastore/io.hpp"
#include "fewshot/datastore/synth.hpp"
#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

using namespace fewshot;
using namespace fewshot::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fewshot_ds_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir / "images");
  return dir;
}

Image solid(std::size_t h, std::size_t w, double v) { return nd::Tensor::full({h, w, 3}, v); }

void write_labels(const fs::path& root, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::ofstream out(root / "labels.csv");
  out << "FILE_NAME,CATEGORY\n";
  for (const auto& [file, cat] : rows) out << file << "," << cat << "\n";
}

Dataset tiny_dataset(std::string id, std::size_t classes, std::size_t per_class) {
  std::vector<std::string> names;
  std::vector<std::vector<ImageRecord>> records(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    names.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < per_class; ++i) {
      records[c].push_back({std::make_shared<const Image>(solid(4, 4, 0.1 * static_cast<double>(i % 10))), c, {}});
    }
  }
  return Dataset(std::move(id), "test", std::move(names), std::move(records));
}

std::set<std::string> class_set(const Dataset& d) { return {d.classes().begin(), d.classes().end()}; }

}  // namespace

TEST(Load, TwoClassesThreeImagesEach) {
  const fs::path root = scratch("load");
  std::vector<std::pair<std::string, std::string>> rows;
  for (const std::string cat : {"cat", "dog"}) {
    for (int i = 0; i < 3; ++i) {
      const std::string file = cat + std::to_string(i) + ".png";
      write_png(solid(8, 6, 0.5), root / "images" / file);
      rows.emplace_back(file, cat);
    }
  }
  write_labels(root, rows);
  const Dataset d = load_dataset(root);
  EXPECT_EQ(d.class_count(), 2u);
  EXPECT_EQ(d.records(0).size(), 3u);
  EXPECT_EQ(d.records(1).size(), 3u);
  EXPECT_EQ(d.image_shape(), (ImageShape{8, 6, 3}));
  EXPECT_EQ(d.id(), "fewshot_ds_load");
  fs::remove_all(root);
}

TEST(Load, MissingImageIsIntegrityErrorNamingFile) {
  const fs::path root = scratch("missing");
  write_png(solid(4, 4, 0.0), root / "images" / "a.png");
  write_png(solid(4, 4, 0.0), root / "images" / "b.png");
  write_labels(root, {{"a.png", "x"}, {"b.png", "y"}, {"ghost.png", "y"}});
  try {
    load_dataset(root);
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost.png"), std::string::npos);
  }
  fs::remove_all(root);
}

TEST(Load, MissingLabelsIsFormatError) {
  const fs::path root = scratch("nolabels");
  EXPECT_THROW(load_dataset(root), FormatError);
  fs::remove_all(root);
}

TEST(Load, InconsistentShapesRejected) {
  const fs::path root = scratch("shapes");
  write_png(solid(4, 4, 0.0), root / "images" / "a.png");
  write_png(solid(5, 4, 0.0), root / "images" / "b.png");
  write_labels(root, {{"a.png", "x"}, {"b.png", "y"}});
  EXPECT_THROW(load_dataset(root), ShapeError);
  fs::remove_all(root);
}

TEST(Load, FullSizeImageShape) {
  const fs::path root = scratch("full");
  write_png(solid(128, 128, 0.2), root / "images" / "a.png");
  write_png(solid(128, 128, 0.8), root / "images" / "b.png");
  write_labels(root, {{"a.png", "x"}, {"b.png", "y"}});
  std::ofstream(root / "info.json") << R"({"dataset_id": "BRD", "domain_tag": "birds"})";
  const Dataset d = load_dataset(root);
  EXPECT_EQ(d.image_shape(), (ImageShape{128, 128, 3}));
  EXPECT_EQ(d.id(), "BRD");
  EXPECT_EQ(d.domain_tag(), "birds");
  fs::remove_all(root);
}

TEST(Synth, SameSeedIsBitIdentical) {
  const SynthSpec spec{.domains = 10, .classes = 10, .images_per_class = 40, .image_side = 32, .seed = 7};
  const MetaDataset a = synth_meta_dataset(spec);
  const MetaDataset b = synth_meta_dataset(spec);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t d = 0; d < a.size(); ++d) {
    EXPECT_EQ(a.datasets[d].id(), b.datasets[d].id());
    for (std::size_t c = 0; c < 10; ++c) {
      ASSERT_EQ(a.datasets[d].records(c).size(), 40u);
      for (std::size_t i = 0; i < 40; ++i) {
        ASSERT_EQ(*a.datasets[d].records(c)[i].image, *b.datasets[d].records(c)[i].image);
      }
    }
  }
  std::set<std::string> families;
  for (const auto& d : a.datasets) families.insert(d.domain_tag());
  EXPECT_EQ(families.size(), kFamilyCount);
}

TEST(Synth, RecordsDistinctAndInRange) {
  const MetaDataset m = synth_meta_dataset({.domains = 6, .classes = 3, .images_per_class = 21, .image_side = 16, .seed = 1});
  for (const auto& d : m.datasets) {
    EXPECT_EQ(d.image_shape(), (ImageShape{16, 16, 3}));
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(d.records(c).size(), 21u);
      EXPECT_NE(*d.records(c)[0].image, *d.records(c)[1].image);
      for (double v : d.records(c)[0].image->data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
  const MetaDataset other = synth_meta_dataset({.domains = 1, .classes = 3, .images_per_class = 21, .image_side = 16, .seed = 2});
  EXPECT_NE(*other.datasets[0].records(0)[0].image, *m.datasets[0].records(0)[0].image);
}

TEST(Synth, ParametersBelowMinimaRejected) {
  EXPECT_THROW(synth_meta_dataset({.domains = 0}), ConfigError);
  EXPECT_THROW(synth_meta_dataset({.classes = 1}), ConfigError);
  EXPECT_THROW(synth_meta_dataset({.images_per_class = 20}), ConfigError);
  EXPECT_THROW(synth_meta_dataset({.image_side = 15}), ConfigError);
}

TEST(SplitClasses, TwentyClassesGiveFourteenThreeThree) {
  const Dataset d = tiny_dataset("twenty", 20, 1);
  const auto parts = split_classes(d, {0.70, 0.15, 0.15}, 3);
  EXPECT_EQ(parts[0].class_count(), 14u);
  EXPECT_EQ(parts[1].class_count(), 3u);
  EXPECT_EQ(parts[2].class_count(), 3u);
  const auto again = split_classes(d, {0.70, 0.15, 0.15}, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(parts[i].classes(), again[i].classes());
}

TEST(SplitClasses, DisjointAndCoveringForRandomInputs) {
  RngStream rng(99, {"test", "split-classes", 0});
  int checked = 0;
  while (checked < 1000) {
    const std::size_t n = 6 + rng.index(40);
    const double fv = rng.uniform(0.05, 0.4), ft = rng.uniform(0.05, 0.4);
    const std::array<double, 3> f{1.0 - fv - ft, fv, ft};
    const std::size_t nv = static_cast<std::size_t>(std::floor(fv * n + 1e-9));
    const std::size_t nt = static_cast<std::size_t>(std::floor(ft * n + 1e-9));
    const Dataset d = tiny_dataset("r", n, 1);
    if (nv < 2 || nt < 2 || nv + nt + 2 > n) {
      EXPECT_THROW(split_classes(d, f, rng.next_u64()), ConfigError);
      continue;
    }
    const auto parts = split_classes(d, f, rng.next_u64());
    EXPECT_EQ(parts[1].class_count(), nv);
    EXPECT_EQ(parts[2].class_count(), nt);
    std::set<std::string> all;
    std::size_t total = 0;
    for (const auto& p : parts) {
      const auto s = class_set(p);
      total += s.size();
      all.insert(s.begin(), s.end());
    }
    ASSERT_EQ(total, n);
    ASSERT_EQ(all, class_set(d));
    ++checked;
  }
}

TEST(SplitClasses, TooFewClassesRejected) {
  EXPECT_THROW(split_classes(tiny_dataset("six", 6, 1), {0.70, 0.15, 0.15}, 1), ConfigError);
  EXPECT_THROW(split_classes(tiny_dataset("t", 20, 1), {0.5, 0.2, 0.2}, 1), ConfigError);
}

TEST(SplitDatasets, SevenThreePartition) {
  MetaDataset meta;
  for (int i = 0; i < 10; ++i) meta.datasets.push_back(tiny_dataset("d" + std::to_string(i), 2, 1));
  std::set<std::vector<std::string>> partitions;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [train, valid] = split_datasets(meta, {7, 3}, seed);
    EXPECT_EQ(train.size(), 7u);
    EXPECT_EQ(valid.size(), 3u);
    EXPECT_EQ(valid.role, Role::meta_valid);
    std::set<std::string> ids;
    std::vector<std::string> valid_ids;
    for (const auto& d : train.datasets) ids.insert(d.id());
    for (const auto& d : valid.datasets) {
      ids.insert(d.id());
      valid_ids.push_back(d.id());
    }
    EXPECT_EQ(ids.size(), 10u);
    partitions.insert(valid_ids);
  }
  EXPECT_GE(partitions.size(), 2u);
  EXPECT_THROW(split_datasets(meta, {10, 0}, 1), ConfigError);
  EXPECT_THROW(split_datasets(meta, {6, 3}, 1), ConfigError);
}

TEST(Concat, GlobalLabelOffsets) {
  MetaDataset meta;
  meta.datasets.push_back(tiny_dataset("a", 3, 2));
  meta.datasets.push_back(tiny_dataset("b", 4, 5));
  const BatchPool pool = concat_for_batches(meta);
  EXPECT_EQ(pool.class_count, 7u);
  EXPECT_EQ(pool.items.size(), 3u * 2 + 4u * 5);
  EXPECT_EQ(pool.label_offsets, (std::vector<std::size_t>{0, 3}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_LT(pool.items[i].label, 3);
  EXPECT_EQ(pool.items[6].label, 3);
}

TEST(RoundTrip, SyntheticDatasetSurvivesDisk) {
  const MetaDataset m = synth_meta_dataset({.domains = 2, .classes = 3, .images_per_class = 21, .image_side = 16, .seed = 5});
  const fs::path root = fs::temp_directory_path() / "fewshot_ds_roundtrip";
  fs::remove_all(root);
  write_meta_dataset(m, root);
  const MetaDataset back = load_meta_dataset(root, Role::meta_test);
  ASSERT_EQ(back.size(), m.size());
  for (std::size_t d = 0; d < m.size(); ++d) {
    const Dataset& a = m.datasets[d];
    const Dataset& b = back.datasets[d];
    EXPECT_EQ(a.id(), b.id());
    EXPECT_EQ(a.domain_tag(), b.domain_tag());
    EXPECT_EQ(a.classes(), b.classes());
    EXPECT_EQ(a.image_shape(), b.image_shape());
    for (std::size_t c = 0; c < a.class_count(); ++c) {
      ASSERT_EQ(a.records(c).size(), b.records(c).size());
      for (std::size_t i = 0; i < a.records(c).size(); ++i) {
        const auto x = a.records(c)[i].image->data();
        const auto y = b.records(c)[i].image->data();
        for (std::size_t j = 0; j < x.size(); ++j) ASSERT_LE(std::abs(x[j] - y[j]), 1.0 / 255.0);
      }
    }
  }
  fs::remove_all(root);
}
