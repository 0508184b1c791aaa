// SPDX-License-Identifier: Apache-2.0
#ifndef DSA_HASHING_HPP
#define DSA_HASHING_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace dsa {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so independent streams can be consumed in any
/// order or in parallel and still reproduce bit-for-bit.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_double();
  /// Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound);

  CounterRng split(std::uint64_t substream) const;
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace dsa

#endif  // DSA_HASHING_HPP
