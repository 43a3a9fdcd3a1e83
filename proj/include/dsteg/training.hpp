#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsteg/adam.hpp"
#include "dsteg/bitmsg.hpp"
#include "dsteg/imaging.hpp"
#include "dsteg/losses.hpp"
#include "dsteg/networks.hpp"

namespace dsteg {

struct TrainConfig {
  ModelConfig model;
  int epochs = 300;
  int batch = 12;
  AdamConfig adam;
  std::uint64_t seed = 1;
  int checkpoint_interval = 10;
  std::string train_dir;
  std::string val_dir;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;
  LossReport losses;  // batch means over the epoch
  double adversary_loss = 0.0;
};

struct MetricsReport {
  double psnr = 0.0;
  double ssim = 0.0;
  std::vector<double> bit_error;  // one per decoder
  std::size_t samples = 0;
};

/// Messages for a batch: messages[b][i] is sample b's message for decoder i.
using BatchMessages = std::vector<std::vector<BitMessage>>;

/// Owns a model and the two optimizers. One adversary step is followed by
/// one encoder/decoder step for every batch.
class Trainer {
 public:
  explicit Trainer(TrainConfig config);
  Trainer(TrainConfig config, ModelParams<float> model);

  /// Updates only the adversary: BCE on covers (label 0) and stegos from
  /// the current encoder (label 1), fed as one batch. Returns the loss.
  double adversary_step(const Tensor<float>& covers, const BatchMessages& messages);

  /// Updates the encoder and every decoder by the weighted total loss. The
  /// adversary is evaluated but neither its weights nor its statistics change.
  LossReport encoder_step(const Tensor<float>& covers, const BatchMessages& messages);

  /// One pass over `data` in a seeded shuffled order.
  EpochRecord run_epoch(const std::vector<ImageTensor>& data);

  /// Fresh random messages for `count` samples from the trainer's stream.
  BatchMessages draw_messages(std::size_t count);

  const TrainConfig& config() const noexcept { return config_; }
  ModelParams<float>& model() noexcept { return model_; }
  const ModelParams<float>& model() const noexcept { return model_; }
  AdamState<float>& encoder_optimizer() noexcept { return encoder_opt_; }
  AdamState<float>& adversary_optimizer() noexcept { return adversary_opt_; }
  const AdamState<float>& encoder_optimizer() const noexcept { return encoder_opt_; }
  const AdamState<float>& adversary_optimizer() const noexcept { return adversary_opt_; }
  int epochs_done() const noexcept { return epochs_done_; }
  void set_epochs_done(int n) noexcept { epochs_done_ = n; }
  SplitMix64& message_stream() noexcept { return message_rng_; }
  const SplitMix64& message_stream() const noexcept { return message_rng_; }

 private:
  TrainConfig config_;
  ModelParams<float> model_;
  AdamState<float> encoder_opt_;
  AdamState<float> adversary_opt_;
  SplitMix64 message_rng_;
  int epochs_done_ = 0;
};

struct TrainResult {
  ModelParams<float> model;
  std::vector<EpochRecord> history;
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called every `checkpoint_interval` epochs and after the last one.
  std::function<void(const Trainer&)> on_checkpoint;
};

TrainResult train(const TrainConfig& config, const std::vector<ImageBuffer>& dataset,
                  const TrainCallbacks& callbacks = {});

/// Runs `trainer` from its current epoch up to the configured epoch count.
std::vector<EpochRecord> continue_training(Trainer& trainer, const std::vector<ImageBuffer>& dataset,
                                           const TrainCallbacks& callbacks = {});

/// Encode random messages into every image, quantize the stego to 8 bits,
/// decode with every decoder. Reports mean PSNR/SSIM (cover vs quantized
/// stego) and mean bit error per decoder.
MetricsReport evaluate(const ModelParams<float>& model, const std::vector<ImageBuffer>& dataset, std::uint64_t seed);

std::string to_json_line(const EpochRecord& record);
std::string to_json(const MetricsReport& report);

}  // namespace dsteg
