#include "fewshot/rng.hpp"

#include <cmath>
#include <numbers>

namespace fewshot {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t combine(std::uint64_t h, std::uint64_t v) { return mix64(h ^ mix64(v)); }

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, const StreamKey& key)
    : RngStream(master_seed,
                combine(combine(combine(mix64(master_seed), hash_string(key.phase)),
                                hash_string(key.purpose)),
                        key.index)) {}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t key_hash)
    : master_seed_(master_seed), key_hash_(key_hash), engine_(mix64(key_hash)) {}

RngStream RngStream::child(std::string_view purpose, std::uint64_t index) const {
  return RngStream(master_seed_, combine(combine(key_hash_, hash_string(purpose)), index));
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::index(std::size_t n) {
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t range = n;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

long RngStream::uniform_int(long lo, long hi) {
  return lo + static_cast<long>(index(static_cast<std::size_t>(hi - lo) + 1));
}

double RngStream::normal() {
  // Box-Muller; the second variate is discarded so the stream position
  // depends only on the number of calls.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace fewshot
