#include <doctest.h>

#include <cmath>

#include "dsteg/classic.hpp"
#include "dsteg/corpus.hpp"
#include "dsteg/error.hpp"
#include "golden.hpp"

using namespace dsteg;

namespace {

ImageBuffer random_image(SplitMix64& rng, Index h, Index w) {
  ImageBuffer img(w, h);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

DeniableKeyPair random_keys(SplitMix64& rng, std::size_t t) {
  return {{rng.next(), random_message(rng.next(), t)}, {rng.next(), random_message(rng.next(), t)}};
}

}  // namespace

TEST_SUITE("classic") {
  TEST_CASE("xor encryption and forged keys") {
    const BitMessage m = parse_hex("C3", 8), k = parse_hex("5A", 8);
    const Ciphertext x = xor_encrypt(m, k);
    CHECK(to_hex(x.bits) == "99");
    CHECK(xor_decrypt(x, k) == m);
    const BitMessage fake = parse_hex("0F", 8);
    const BitMessage forged = forge_key(x, fake);
    CHECK(to_hex(forged) == "96");
    CHECK(xor_decrypt(x, forged) == fake);
    CHECK_THROWS_AS(xor_encrypt(m, parse_hex("5", 4)), Error);
  }

  TEST_CASE("locations follow the reference permutation") {
    CHECK(permute_locations(0x9E3779B97F4A7C15ull, 8) == std::vector<std::size_t>{1, 0, 3, 5, 6, 7, 2, 4});
    CHECK_THROWS_AS(permute_locations(1, 0), Error);
  }

  TEST_CASE("embedding round-trips both messages exactly") {
    SplitMix64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t t = 1 + rng.below(64);
      const ImageBuffer cover = random_image(rng, 8, 8);
      const auto keys = random_keys(rng, t);
      const BitMessage real = random_message(rng.next(), t), fake = random_message(rng.next(), t);
      const ImageBuffer stego = classic_embed(cover, real, fake, keys);
      CHECK(classic_extract(stego, keys.real.seed, keys.fake.seed, keys.real.pad, Slot::Real, t) == real);
      CHECK(classic_extract(stego, keys.real.seed, keys.fake.seed, keys.fake.pad, Slot::Fake, t) == fake);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < cover.data.size(); ++i) {
        const int d = std::abs(int(cover.data[i]) - int(stego.data[i]));
        CHECK(d <= 1);
        changed += d != 0;
      }
      CHECK(changed <= 2 * t);
    }
  }

  TEST_CASE("only the keyed locations change") {
    SplitMix64 rng(5);
    const ImageBuffer cover = random_image(rng, 4, 4);
    const std::size_t t = 6;
    const auto keys = random_keys(rng, t);
    const ImageBuffer stego = classic_embed(cover, random_message(1, t), random_message(2, t), keys);
    const auto pos = permute_locations(keys.real.seed ^ keys.fake.seed, cover.data.size());
    for (std::size_t i = 2 * t; i < pos.size(); ++i) CHECK(stego.data[pos[i]] == cover.data[pos[i]]);
  }

  TEST_CASE("forged key over the real slots opens the fake message") {
    SplitMix64 rng(8);
    const ImageBuffer cover = procedural_image(3, {16, 16});
    const std::size_t t = 30;
    const auto keys = random_keys(rng, t);
    const BitMessage real = random_message(10, t), fake = random_message(11, t);
    const ImageBuffer stego = classic_embed(cover, real, fake, keys);
    const Ciphertext slots = read_slot(stego, keys.real.seed, keys.fake.seed, Slot::Real, t);
    const BitMessage forged = forge_key(slots, fake);
    CHECK(classic_extract(stego, keys.real.seed, keys.fake.seed, forged, Slot::Real, t) == fake);
  }

  TEST_CASE("capacity and length errors") {
    SplitMix64 rng(1);
    const ImageBuffer cover = random_image(rng, 2, 2);  // 12 channel bytes
    auto keys = random_keys(rng, 6);
    CHECK_NOTHROW(classic_embed(cover, random_message(1, 6), random_message(2, 6), keys));
    keys = random_keys(rng, 7);
    CHECK_THROWS_AS(classic_embed(cover, random_message(1, 7), random_message(2, 7), keys), Error);
    keys = random_keys(rng, 6);
    CHECK_THROWS_AS(classic_embed(cover, random_message(1, 6), random_message(2, 5), keys), Error);
    keys.fake.pad = random_message(3, 5);
    CHECK_THROWS_AS(classic_embed(cover, random_message(1, 6), random_message(2, 6), keys), Error);
    CHECK_THROWS_AS(classic_extract(cover, 1, 2, random_message(3, 5), Slot::Real, 6), Error);
    try {
      classic_embed(cover, random_message(1, 7), random_message(2, 7), random_keys(rng, 7));
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Capacity);
    }
  }
}
