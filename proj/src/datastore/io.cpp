#include "fewshot/datastore/io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "fewshot/error.hpp"

namespace fewshot::data {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

}  // namespace

Image read_png(const fs::path& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IntegrityError("cannot open image " + path.string());
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    throw FormatError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  std::vector<png_byte> pixels;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  if (row_bytes != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG layout in " + path.string());
  }
  pixels.resize(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image image({height, width, 3});
  for (std::size_t i = 0; i < pixels.size(); ++i) image[i] = pixels[i] / 255.0;
  return image;
}

void write_png(const Image& image, const fs::path& path) {
  const auto& s = image.shape();
  if (s.size() != 3 || s[2] != 3) throw ShapeError("write_png expects HxWx3, got " + nd::shape_string(s));
  File file(std::fopen(path.c_str(), "wb"));
  if (!file) throw FormatError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  std::vector<png_byte> pixels(image.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<png_byte>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(s[1]), static_cast<png_uint_32>(s[0]), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < s[0]; ++y) png_write_row(png, pixels.data() + y * s[1] * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Dataset load_dataset(const fs::path& root) {
  const fs::path labels_path = root / "labels.csv";
  std::ifstream labels(labels_path);
  if (!labels) throw FormatError("missing labels.csv in " + root.string());

  std::string line;
  if (!std::getline(labels, line)) throw FormatError(labels_path.string() + " is empty");
  const auto header = split_csv_line(trim(line));
  const auto file_col = std::find(header.begin(), header.end(), "FILE_NAME");
  const auto cat_col = std::find(header.begin(), header.end(), "CATEGORY");
  if (file_col == header.end() || cat_col == header.end()) {
    throw FormatError(labels_path.string() + ": header must contain FILE_NAME and CATEGORY");
  }
  const auto fi = static_cast<std::size_t>(file_col - header.begin());
  const auto ci = static_cast<std::size_t>(cat_col - header.begin());

  std::vector<std::pair<std::string, std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(labels, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() <= std::max(fi, ci)) {
      throw FormatError(labels_path.string() + ":" + std::to_string(line_no) + ": too few columns");
    }
    rows.emplace_back(trim(fields[fi]), trim(fields[ci]));
  }

  std::map<std::string, std::size_t> class_index;
  for (const auto& [_, category] : rows) class_index.emplace(category, 0);
  std::vector<std::string> classes;
  for (auto& [name, idx] : class_index) {
    idx = classes.size();
    classes.push_back(name);
  }

  std::vector<std::vector<ImageRecord>> records(classes.size());
  for (const auto& [file, category] : rows) {
    const fs::path image_path = root / "images" / file;
    if (!fs::exists(image_path)) {
      throw IntegrityError(labels_path.string() + " references missing image " + file);
    }
    const std::size_t label = class_index.at(category);
    records[label].push_back({std::make_shared<const Image>(read_png(image_path)), label, file});
  }

  std::string id = root.filename().string();
  if (id.empty()) id = root.parent_path().filename().string();
  std::string domain = "unknown";
  const fs::path info_path = root / "info.json";
  if (fs::exists(info_path)) {
    std::ifstream in(info_path);
    nlohmann::json info;
    try {
      in >> info;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(info_path.string() + ": " + e.what());
    }
    id = info.value("dataset_id", id);
    domain = info.value("domain_tag", domain);
  }
  return Dataset(std::move(id), std::move(domain), std::move(classes), std::move(records));
}

void write_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root / "images");
  std::ofstream labels(root / "labels.csv");
  if (!labels) throw FormatError("cannot write " + (root / "labels.csv").string());
  labels << "FILE_NAME,CATEGORY\n";
  for (std::size_t c = 0; c < dataset.class_count(); ++c) {
    const auto& recs = dataset.records(c);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const std::string file =
          "c" + std::to_string(c) + "_" + sanitize(dataset.classes()[c]) + "_" + std::to_string(i) + ".png";
      write_png(*recs[i].image, root / "images" / file);
      labels << file << ',' << dataset.classes()[c] << '\n';
    }
  }
  nlohmann::json info{{"dataset_id", dataset.id()}, {"domain_tag", dataset.domain_tag()}};
  std::ofstream(root / "info.json") << info.dump(2) << '\n';
}

MetaDataset load_meta_dataset(const fs::path& root, Role role) {
  if (!fs::is_directory(root)) throw FormatError("meta-dataset directory " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "labels.csv")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  MetaDataset meta{{}, role};
  for (const auto& d : dirs) meta.datasets.push_back(load_dataset(d));
  meta.validate();
  return meta;
}

void write_meta_dataset(const MetaDataset& meta, const fs::path& root) {
  for (const auto& d : meta.datasets) write_dataset(d, root / sanitize(d.id()));
}

}  // namespace fewshot::data
