#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dsteg/networks.hpp"
#include "dsteg/training.hpp"

namespace dsteg {

inline constexpr char kModelMagic[4] = {'D', 'S', 'T', 'G'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

using NamedTensor = std::pair<std::string, Tensor<float>>;

/// Parsed file contents before they are matched against a model layout.
struct ModelFile {
  ModelConfig config;
  std::vector<NamedTensor> tensors;
};

/// Little-endian byte image of a model file. `extra` tensors are appended
/// after the model's own, in order.
std::string serialize_model(const ModelParams<float>& model, const std::vector<NamedTensor>& extra = {});
ModelFile parse_model_file(std::string_view bytes);

/// Rebuilds a model from a parsed file. Every model tensor must be present
/// with its exact shape; tensors under the "optimizer." and "trainer."
/// prefixes are ignored, anything else is a format error.
ModelParams<float> model_from_file(const ModelFile& file);

void save_model(const std::filesystem::path& path, const ModelParams<float>& model);
ModelParams<float> load_model(const std::filesystem::path& path);

/// Model file plus Adam moments, step counters, finished epochs and the
/// message stream position, so training can continue where it stopped.
void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer);
Trainer load_checkpoint(const std::filesystem::path& path, const TrainConfig& config);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dsteg
