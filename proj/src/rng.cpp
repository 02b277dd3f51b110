#include "omniisr/rng.hpp"

#include <algorithm>
#include <numeric>

namespace omniisr {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t tag = static_cast<std::uint64_t>(stream) * 0x9E3779B97F4A7C15ULL;
  return mix64(mix64(mix64(master ^ tag) ^ a) ^ b);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace omniisr
