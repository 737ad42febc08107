#include "fewshot/ndcore/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::nd {

static_assert(std::endian::native == std::endian::little, "params.bin is written in native order");

void ParamSet::insert(const std::string& path, Tensor value) {
  if (path.empty()) throw Error("empty parameter path");
  if (!entries_.emplace(path, std::move(value)).second) throw Error("duplicate parameter path " + path);
}

void ParamSet::assign(const std::string& path, Tensor value) {
  Tensor& slot = at(path);
  if (slot.shape() != value.shape()) {
    throw ShapeError("parameter " + path + " has shape " + shape_string(slot.shape()) + ", got " +
                     shape_string(value.shape()));
  }
  slot = std::move(value);
}

const Tensor& ParamSet::at(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw Error("unknown parameter " + path);
  return it->second;
}

Tensor& ParamSet::at(const std::string& path) {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw Error("unknown parameter " + path);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

std::vector<std::string> ParamSet::paths() const {
  std::vector<std::string> out;
  for (const auto& [p, _] : entries_) out.push_back(p);
  return out;
}

ParamSet ParamSet::with_prefix(const std::string& prefix) const {
  ParamSet out;
  for (const auto& [p, t] : entries_) {
    if (p.starts_with(prefix)) out.entries_.emplace(p, t);
  }
  return out;
}

ParamSet ParamSet::without_prefix(const std::string& prefix) const {
  ParamSet out;
  for (const auto& [p, t] : entries_) {
    if (!p.starts_with(prefix)) out.entries_.emplace(p, t);
  }
  return out;
}

void ParamSet::merge(const ParamSet& other) {
  for (const auto& [p, t] : other.entries_) entries_[p] = t;
}

ParamSet ParamSet::rounded_to_float() const {
  ParamSet out = *this;
  for (auto& [_, t] : out.entries_) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

std::uint64_t ParamSet::fingerprint() const {
  std::uint64_t h = 0x51ed270b27c1a4f3ULL;
  for (const auto& [p, t] : entries_) {
    h = mix64(h ^ hash_string(p));
    for (auto d : t.shape()) h = mix64(h ^ d);
    for (double v : t.data()) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

GradMap zero_grads(const ParamSet& params) {
  GradMap g;
  for (const auto& [p, t] : params) g.emplace(p, Tensor::zeros(t.shape()));
  return g;
}

void save_params(const ParamSet& params, const std::filesystem::path& manifest,
                 const std::filesystem::path& blob) {
  std::ofstream man(manifest);
  std::ofstream bin(blob, std::ios::binary);
  if (!man || !bin) throw FormatError("cannot write parameter files at " + manifest.string());
  for (const auto& [path, t] : params) {
    man << path << '\t' << "float32" << '\t';
    for (std::size_t i = 0; i < t.rank(); ++i) man << (i ? "x" : "") << t.dim(i);
    man << '\n';
    for (double v : t.data()) {
      const float f = static_cast<float>(v);
      bin.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  if (!man || !bin) throw FormatError("failed writing parameter files at " + manifest.string());
}

ParamSet load_params(const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  std::ifstream man(manifest);
  if (!man) throw FormatError("missing parameter manifest " + manifest.string());
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw FormatError("missing parameter blob " + blob.string());

  ParamSet params;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(man, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string path, dtype, dims;
    if (!std::getline(fields, path, '\t') || !std::getline(fields, dtype, '\t') ||
        !std::getline(fields, dims)) {
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": expected path, dtype, shape");
    }
    if (dtype != "float32") throw FormatError("unsupported dtype " + dtype + " for " + path);
    Shape shape;
    std::istringstream ds(dims);
    std::string part;
    while (std::getline(ds, part, 'x')) {
      try {
        shape.push_back(std::stoul(part));
      } catch (const std::exception&) {
        throw FormatError("bad shape '" + dims + "' for " + path);
      }
    }
    std::vector<float> raw(shape_size(shape));
    bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!bin) throw FormatError("parameter blob truncated at " + path);
    std::vector<double> values(raw.begin(), raw.end());
    params.insert(path, Tensor(std::move(shape), std::move(values)));
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw FormatError("parameter blob has trailing bytes");
  return params;
}

}  // namespace fewshot::nd
