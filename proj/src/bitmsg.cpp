#include "dsteg/bitmsg.hpp"

#include "dsteg/error.hpp"

namespace dsteg {

std::uint64_t SplitMix64::below(std::uint64_t bound) noexcept {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % bound;
}

BitMessage::BitMessage(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  if (bits_.empty()) fail(ErrorKind::InvalidArgument, "message must have at least one bit");
  for (auto b : bits_)
    if (b > 1) fail(ErrorKind::InvalidArgument, "message bits must be 0 or 1");
}

BitMessage BitMessage::zeros(std::size_t nbits) {
  return BitMessage(std::vector<std::uint8_t>(nbits, 0));
}

void BitMessage::flip(std::size_t i) { bits_.at(i) ^= 1u; }

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

BitMessage parse_hex(std::string_view hex, std::size_t nbits) {
  if (nbits == 0) fail(ErrorKind::InvalidArgument, "message must have at least one bit");
  const std::size_t expected = (nbits + 3) / 4;
  if (hex.size() != expected)
    fail(ErrorKind::LengthMismatch, "hex message of " + std::to_string(nbits) + " bits needs " +
                                        std::to_string(expected) + " digits, got " +
                                        std::to_string(hex.size()));
  std::vector<std::uint8_t> bits;
  bits.reserve(expected * 4);
  for (char c : hex) {
    const int v = hex_value(c);
    if (v < 0) fail(ErrorKind::InvalidArgument, std::string("invalid hex digit '") + c + "'");
    for (int shift = 3; shift >= 0; --shift) bits.push_back(static_cast<std::uint8_t>((v >> shift) & 1));
  }
  for (std::size_t i = nbits; i < bits.size(); ++i)
    if (bits[i] != 0) fail(ErrorKind::InvalidArgument, "nonzero pad bits in final hex digit");
  bits.resize(nbits);
  return BitMessage(std::move(bits));
}

std::string to_hex(const BitMessage& m) {
  static constexpr char digits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve((m.size() + 3) / 4);
  for (std::size_t i = 0; i < m.size(); i += 4) {
    int v = 0;
    for (std::size_t j = 0; j < 4; ++j) v = (v << 1) | (i + j < m.size() ? m[i + j] : 0);
    out.push_back(digits[v]);
  }
  return out;
}

BitMessage random_message(std::uint64_t seed, std::size_t nbits) {
  if (nbits == 0) fail(ErrorKind::InvalidArgument, "message must have at least one bit");
  SplitMix64 rng(seed);
  std::vector<std::uint8_t> bits(nbits);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < nbits; ++i) {
    if (i % 64 == 0) word = rng.next();
    bits[i] = static_cast<std::uint8_t>((word >> (63 - i % 64)) & 1u);
  }
  return BitMessage(std::move(bits));
}

double bit_error(const BitMessage& a, const BitMessage& b) {
  if (a.size() != b.size())
    fail(ErrorKind::LengthMismatch, "bit_error on messages of different lengths");
  if (a.size() == 0) return 0.0;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

}  // namespace dsteg

namespace dsteg {

std::vector<std::size_t> keyed_permutation(std::uint64_t seed, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.below(i + 1)]);
  return perm;
}

}  // namespace dsteg
