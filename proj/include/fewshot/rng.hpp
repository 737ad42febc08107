#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace fewshot {

// Hierarchical key identifying an independent random stream.
struct StreamKey {
  std::string phase;
  std::string purpose;
  std::uint64_t index = 0;
};

std::uint64_t hash_string(std::string_view s);
std::uint64_t mix64(std::uint64_t x);

// Deterministic random stream derived from (master seed, key).
//
// Every distribution is implemented here rather than through <random>'s
// distribution classes, whose algorithms are implementation-defined; only the
// engine (std::mt19937_64, fully specified by the standard) is borrowed.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, const StreamKey& key);

  // Independent sub-stream; does not advance this stream.
  RngStream child(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t key_hash() const { return key_hash_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform in [0, n); n must be positive.
  std::size_t index(std::size_t n);
  // Uniform over the inclusive range [lo, hi].
  long uniform_int(long lo, long hi);
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  RngStream(std::uint64_t master_seed, std::uint64_t key_hash);

  std::uint64_t master_seed_;
  std::uint64_t key_hash_;
  std::mt19937_64 engine_;
};

}  // namespace fewshot
