#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fewshot/ndcore/tensor.hpp"

namespace fewshot::nd {

// Gradients keyed by parameter path.
using GradMap = std::map<std::string, Tensor>;

// Named parameters iterated in lexicographic path order.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void insert(const std::string& path, Tensor value);  // throws on duplicate path
  void assign(const std::string& path, Tensor value);  // existing path, same shape
  const Tensor& at(const std::string& path) const;
  Tensor& at(const std::string& path);
  bool contains(const std::string& path) const { return entries_.count(path) != 0; }
  void erase(const std::string& path) { entries_.erase(path); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t scalar_count() const;
  std::vector<std::string> paths() const;

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  // Entries whose path starts with `prefix`.
  ParamSet with_prefix(const std::string& prefix) const;
  // Entries whose path does not start with `prefix`.
  ParamSet without_prefix(const std::string& prefix) const;
  // Inserts or overwrites every entry of `other`.
  void merge(const ParamSet& other);

  // Every value rounded through 32-bit float, matching the on-disk format.
  ParamSet rounded_to_float() const;
  // Hash over paths, shapes and value bits.
  std::uint64_t fingerprint() const;

  bool operator==(const ParamSet& other) const = default;

 private:
  Map entries_;
};

GradMap zero_grads(const ParamSet& params);

// Text manifest (one line per parameter: path, dtype, shape) plus a
// little-endian float32 blob in manifest order.
void save_params(const ParamSet& params, const std::filesystem::path& manifest,
                 const std::filesystem::path& blob);
ParamSet load_params(const std::filesystem::path& manifest, const std::filesystem::path& blob);

}  // namespace fewshot::nd
