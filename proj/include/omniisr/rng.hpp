#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace omniisr {

using Rng = std::mt19937_64;

/// Named sub-streams of a master seed. Every consumer of randomness draws
/// from its own stream so adding draws in one place never shifts another.
enum class Stream : std::uint64_t {
  init = 1,
  batches = 2,
  participants = 3,
  client = 4,
  partition = 5,
  data = 6,
  probe = 7,
  trial = 8,
  cloud = 9,
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based derivation: seed for (master, stream, a, b) is
///   mix64(mix64(mix64(master ^ stream_tag) ^ a) ^ b)
/// where stream_tag = stream * 0x9E3779B97F4A7C15. Any consumer can compute
/// the seed of, e.g., client n in round t directly, so sequential and
/// parallel execution observe identical draws.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream, a, b));
}

/// Uniformly shuffled 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace omniisr
