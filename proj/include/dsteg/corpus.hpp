#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dsteg/imaging.hpp"

namespace dsteg {

/// Deterministic procedural texture (gradients, stripes, checkers, blobs or
/// value noise, plus light grain) used as a self-contained image corpus.
ImageBuffer procedural_image(std::uint64_t seed, Size2 size);

std::vector<ImageBuffer> procedural_corpus(std::uint64_t seed, std::size_t count, Size2 size);

/// Writes img_00000.png, img_00001.png, ... into `dir` (created if needed).
void write_corpus(const std::filesystem::path& dir, std::uint64_t seed, std::size_t count, Size2 size);

}  // namespace dsteg
