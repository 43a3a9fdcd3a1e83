#pragma once

#include <string>
#include <string_view>

#include "dsteg/training.hpp"

namespace dsteg {

/// Text form of a TrainConfig: one `key = value` per line, `#` starts a
/// comment. Keys missing from the text keep their defaults; unknown keys,
/// repeated keys and malformed values are errors.
///
///   decoders bits height width epochs batch seed checkpoint_interval
///   lambda_image lambda_message lambda_adversarial lambda_decoder lambda_balance
///   lr beta1 beta2 adam_eps train_dir val_dir
TrainConfig parse_run_config(std::string_view text);

/// Every key, in the order above. Doubles use the shortest representation
/// that reads back to the same value.
std::string render_run_config(const TrainConfig& config);

}  // namespace dsteg
