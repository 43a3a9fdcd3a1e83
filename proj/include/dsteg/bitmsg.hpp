#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dsteg {

/// SplitMix64 (Steele, Lea, Flood). Used for every keyed or seeded stream
/// so results are reproducible across languages.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection; bound must be nonzero.
  std::uint64_t below(std::uint64_t bound) noexcept;

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Fixed-length bit string. Elements are 0 or 1; bit 0 is the first
/// (most significant) bit of the hex form.
class BitMessage {
 public:
  BitMessage() = default;
  explicit BitMessage(std::vector<std::uint8_t> bits);
  static BitMessage zeros(std::size_t nbits);

  std::size_t size() const noexcept { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  void flip(std::size_t i);

  friend bool operator==(const BitMessage&, const BitMessage&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

BitMessage parse_hex(std::string_view hex, std::size_t nbits);
std::string to_hex(const BitMessage& m);

/// Bits come from SplitMix64(seed), 64 per output word, MSB first.
BitMessage random_message(std::uint64_t seed, std::size_t nbits);

/// Fraction of differing positions.
double bit_error(const BitMessage& a, const BitMessage& b);

/// Fisher-Yates shuffle of [0, n) driven by SplitMix64(seed): for i from
/// n-1 down to 1, swap i with below(i + 1).
std::vector<std::size_t> keyed_permutation(std::uint64_t seed, std::size_t n);

}  // namespace dsteg
