#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsteg/classic.hpp"
#include "dsteg/networks.hpp"

namespace dsteg {

/// Walkthrough of a coercion: the sender embeds a real and a fake message,
/// the receiver extracts the real one, then under coercion reveals only the
/// fake key and the adversary sees the fake message.
struct ScenarioReport {
  std::vector<std::string> lines;
  bool pass = false;

  std::string transcript() const;
};

/// Classic path: every extraction must reproduce its message exactly, and a
/// key forged over the real slots must decrypt them to the fake message.
ScenarioReport run_classic_scenario(const ImageBuffer& cover, const BitMessage& real, const BitMessage& fake,
                                    const DeniableKeyPair& keys);

/// Learned path with decoder 0 as the real extractor and decoder 1 as the
/// fake one. Each cover carries fresh random messages from `seed`; the run
/// passes when the mean bit error of both extractors is below
/// `max_bit_error` and the two extractors disagree on the transmitted bits.
ScenarioReport run_dnn_scenario(const ModelParams<float>& model, const std::vector<ImageBuffer>& covers,
                                std::uint64_t seed, double max_bit_error = 0.05);

}  // namespace dsteg
