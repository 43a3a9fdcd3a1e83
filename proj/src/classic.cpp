#include "dsteg/classic.hpp"

#include "dsteg/error.hpp"

namespace dsteg {

Ciphertext xor_encrypt(const BitMessage& plain, const BitMessage& pad) {
  if (plain.size() != pad.size()) fail(ErrorKind::LengthMismatch, "pad length must equal message length");
  std::vector<std::uint8_t> bits(plain.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = plain[i] ^ pad[i];
  return Ciphertext{BitMessage(std::move(bits))};
}

BitMessage xor_decrypt(const Ciphertext& cipher, const BitMessage& pad) {
  return xor_encrypt(cipher.bits, pad).bits;
}

BitMessage forge_key(const Ciphertext& cipher, const BitMessage& fake) {
  if (cipher.bits.size() != fake.size()) fail(ErrorKind::LengthMismatch, "fake message length must equal ciphertext length");
  return xor_encrypt(cipher.bits, fake).bits;
}

std::vector<std::size_t> permute_locations(std::uint64_t seed, std::size_t n) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "cannot permute an empty location set");
  return keyed_permutation(seed, n);
}

namespace {

void check_capacity(const ImageBuffer& img, std::size_t bits) {
  if (bits == 0) fail(ErrorKind::InvalidArgument, "messages need at least one bit");
  if (img.byte_count() != static_cast<Index>(img.data.size())) fail(ErrorKind::InvalidArgument, "malformed image");
  if (2 * bits > img.data.size())
    fail(ErrorKind::Capacity, "two " + std::to_string(bits) + "-bit messages do not fit in " +
                                  std::to_string(img.data.size()) + " channel bytes");
}

std::size_t slot_offset(Slot slot, std::size_t bits) { return slot == Slot::Real ? 0 : bits; }

}  // namespace

ImageBuffer classic_embed(const ImageBuffer& cover, const BitMessage& real, const BitMessage& fake,
                          const DeniableKeyPair& keys) {
  if (real.size() != fake.size()) fail(ErrorKind::LengthMismatch, "real and fake messages must have equal length");
  const std::size_t t = real.size();
  if (keys.real.pad.size() != t || keys.fake.pad.size() != t)
    fail(ErrorKind::LengthMismatch, "key pads must be " + std::to_string(t) + " bits");
  check_capacity(cover, t);
  const Ciphertext xr = xor_encrypt(real, keys.real.pad);
  const Ciphertext xf = xor_encrypt(fake, keys.fake.pad);
  const auto positions = permute_locations(keys.real.seed ^ keys.fake.seed, cover.data.size());
  ImageBuffer stego = cover;
  for (std::size_t i = 0; i < t; ++i) {
    auto& r = stego.data[positions[i]];
    r = static_cast<std::uint8_t>((r & 0xFEu) | xr.bits[i]);
    auto& f = stego.data[positions[t + i]];
    f = static_cast<std::uint8_t>((f & 0xFEu) | xf.bits[i]);
  }
  return stego;
}

Ciphertext read_slot(const ImageBuffer& stego, std::uint64_t seed_real, std::uint64_t seed_fake, Slot slot,
                     std::size_t bits) {
  check_capacity(stego, bits);
  const auto positions = permute_locations(seed_real ^ seed_fake, stego.data.size());
  const std::size_t offset = slot_offset(slot, bits);
  std::vector<std::uint8_t> out(bits);
  for (std::size_t i = 0; i < bits; ++i) out[i] = stego.data[positions[offset + i]] & 1u;
  return Ciphertext{BitMessage(std::move(out))};
}

BitMessage classic_extract(const ImageBuffer& stego, std::uint64_t seed_real, std::uint64_t seed_fake,
                           const BitMessage& pad, Slot slot, std::size_t bits) {
  if (pad.size() != bits) fail(ErrorKind::LengthMismatch, "pad must be " + std::to_string(bits) + " bits");
  return xor_decrypt(read_slot(stego, seed_real, seed_fake, slot, bits), pad);
}

}  // namespace dsteg
