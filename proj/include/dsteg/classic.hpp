#pragma once

// Exact receiver-deniable embedding without learning: both messages are
// one-time-pad encrypted and written into the LSBs of disjoint, keyed pixel
// locations. Whoever holds a pad reads its own slot range; a coerced
// receiver can hand over a forged pad that decrypts the real slots to any
// chosen fake message.

#include <cstdint>
#include <vector>

#include "dsteg/bitmsg.hpp"
#include "dsteg/imaging.hpp"

namespace dsteg {

/// One-time-pad output; kept distinct from BitMessage so plaintext and
/// ciphertext cannot be swapped silently.
struct Ciphertext {
  BitMessage bits;
  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

struct DeniableKey {
  std::uint64_t seed = 0;
  BitMessage pad;
};

struct DeniableKeyPair {
  DeniableKey real;
  DeniableKey fake;
};

enum class Slot { Real, Fake };

Ciphertext xor_encrypt(const BitMessage& plain, const BitMessage& pad);
BitMessage xor_decrypt(const Ciphertext& cipher, const BitMessage& pad);

/// Pad that decrypts `cipher` to `fake`: cipher XOR fake.
BitMessage forge_key(const Ciphertext& cipher, const BitMessage& fake);

/// Fisher-Yates permutation of [0, n) from SplitMix64(seed).
std::vector<std::size_t> permute_locations(std::uint64_t seed, std::size_t n);

/// LSB replacement: the first t positions of permute_locations(seed_real ^
/// seed_fake, n) carry the real ciphertext, the next t the fake one.
ImageBuffer classic_embed(const ImageBuffer& cover, const BitMessage& real, const BitMessage& fake,
                          const DeniableKeyPair& keys);

/// The raw ciphertext bits stored in one slot range.
Ciphertext read_slot(const ImageBuffer& stego, std::uint64_t seed_real, std::uint64_t seed_fake, Slot slot,
                     std::size_t bits);

BitMessage classic_extract(const ImageBuffer& stego, std::uint64_t seed_real, std::uint64_t seed_fake,
                           const BitMessage& pad, Slot slot, std::size_t bits);

}  // namespace dsteg
