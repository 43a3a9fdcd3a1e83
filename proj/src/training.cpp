#include "dsteg/training.hpp"

#include <json.hpp>

#include <malloc.h>

#include <cmath>
#include <mutex>

namespace dsteg {

namespace {

constexpr std::uint64_t kMessageStream = 0x6D657373616765ull;  // "message"
constexpr std::uint64_t kShuffleStream = 0x73687566666C65ull;  // "shuffle"
constexpr std::uint64_t kInitStream = 0x696E6974ull;           // "init"

Tensor<float> targets_for(const BatchMessages& messages, std::size_t which) {
  const Index batch = static_cast<Index>(messages.size());
  const Index bits = static_cast<Index>(messages.front()[which].size());
  Tensor<float> t({batch, bits});
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < bits; ++i) t[b * bits + i] = messages[static_cast<std::size_t>(b)][which][static_cast<std::size_t>(i)];
  return t;
}

void check_batch(const ModelConfig& config, const Tensor<float>& covers, const BatchMessages& messages) {
  if (covers.rank() != 4 || covers.dim(1) != 3)
    fail(ErrorKind::ShapeMismatch, "covers must be [B,3,H,W], got " + shape_string(covers.shape()));
  if (covers.dim(0) < 2) fail(ErrorKind::InvalidArgument, "training batches need at least two images");
  if (static_cast<Index>(messages.size()) != covers.dim(0))
    fail(ErrorKind::LengthMismatch, "one message set per cover is required");
  for (const auto& m : messages) validate_messages(config, m);
}

// Training allocates and frees many multi-megabyte activations per step.
// Keeping them on the heap instead of fresh mmap pages avoids a page fault
// storm on every allocation.
void keep_large_allocations_on_heap() {
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  });
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) fail(ErrorKind::NonFinite, std::string(what) + " is not finite");
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) fail(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (batch < 2) fail(ErrorKind::InvalidArgument, "batch size must be >= 2 for batch normalization");
  if (checkpoint_interval < 1) fail(ErrorKind::InvalidArgument, "checkpoint interval must be >= 1");
  if (!(adam.lr > 0.0)) fail(ErrorKind::InvalidArgument, "learning rate must be positive");
}

Trainer::Trainer(TrainConfig config)
    : Trainer(config, init_model(config.model, config.seed ^ kInitStream)) {}

Trainer::Trainer(TrainConfig config, ModelParams<float> model)
    : config_(std::move(config)), model_(std::move(model)), message_rng_(config_.seed ^ kMessageStream) {
  config_.validate();
  keep_large_allocations_on_heap();
  if (!(model_.config == config_.model)) fail(ErrorKind::InvalidArgument, "model does not match training config");
  encoder_opt_.config = config_.adam;
  adversary_opt_.config = config_.adam;
}

BatchMessages Trainer::draw_messages(std::size_t count) {
  BatchMessages out(count);
  for (auto& sample : out)
    for (int d = 0; d < config_.model.decoders; ++d)
      sample.push_back(random_message(message_rng_.next(), static_cast<std::size_t>(config_.model.bits)));
  return out;
}

double Trainer::adversary_step(const Tensor<float>& covers, const BatchMessages& messages) {
  check_batch(model_.config, covers, messages);
  const Index batch = covers.dim(0);
  ad::Tape<float> tape;
  ParamBinder<float> binder(tape, {ParamGroup::Adversary});
  const auto planes = ad::replicate_bits<float>(messages, covers.dim(2), covers.dim(3));
  const auto cover = tape.constant(covers);
  const auto stego = encoder_forward(binder, model_, cover, planes, {ad::Mode::Train, false});

  const auto both = ad::concat_channels<float>({cover, stego});  // [B, 6, H, W]
  Tensor<float> mixed({2 * batch, 3, covers.dim(2), covers.dim(3)});
  const Index per = 3 * covers.dim(2) * covers.dim(3);
  for (Index b = 0; b < batch; ++b) {
    mixed.array().segment(b * per, per) = both.value().array().segment(b * 2 * per, per);
    mixed.array().segment((batch + b) * per, per) = both.value().array().segment(b * 2 * per + per, per);
  }
  Tensor<float> labels({2 * batch, 1});
  labels.array().tail(batch).setOnes();

  const auto pred = adversary_forward(binder, model_, tape.constant(mixed), {ad::Mode::Train, true});
  const auto loss = ad::bce(pred, labels);
  const double value = loss.value().item();
  require_finite(value, "adversary loss");
  tape.backward(loss);
  const auto params = trainable_tensors(model_, {ParamGroup::Adversary});
  const auto grads = binder.gradients(params);
  adam_step<float>(adversary_opt_, params, grads);
  return value;
}

LossReport Trainer::encoder_step(const Tensor<float>& covers, const BatchMessages& messages) {
  check_batch(model_.config, covers, messages);
  const auto& w = model_.config.weights;
  ad::Tape<float> tape;
  ParamBinder<float> binder(tape, {ParamGroup::Encoder, ParamGroup::Decoder});
  const auto planes = ad::replicate_bits<float>(messages, covers.dim(2), covers.dim(3));
  const auto cover = tape.constant(covers);
  const auto stego = encoder_forward(binder, model_, cover, planes, {ad::Mode::Train, true});

  std::vector<ad::Var<float>> decoder_losses;
  for (std::size_t d = 0; d < model_.decoders.size(); ++d) {
    const auto soft = decoder_forward(binder, model_, d, stego, {ad::Mode::Train, true});
    decoder_losses.push_back(message_loss(tape.constant(targets_for(messages, d)), soft));
  }
  const auto image = image_loss(cover, stego);
  const auto balance = balance_loss(decoder_losses);
  const auto message = balanced_message_loss(decoder_losses, balance, w);
  const auto pred = adversary_forward(binder, model_, stego, {ad::Mode::Train, false});
  const auto adversarial = adversarial_loss(pred);
  const auto total = total_loss(image, message, adversarial, w);
  require_finite(total.value().item(), "total loss");

  LossReport report;
  report.image = image.value().item();
  for (const auto& l : decoder_losses) report.decoder.push_back(l.value().item());
  report.balance = balance.value().item();
  report.message = message.value().item();
  report.adversarial = adversarial.value().item();
  report.total = total.value().item();

  tape.backward(total);
  const auto params = trainable_tensors(model_, {ParamGroup::Encoder, ParamGroup::Decoder});
  const auto grads = binder.gradients(params);
  adam_step<float>(encoder_opt_, params, grads);
  return report;
}

EpochRecord Trainer::run_epoch(const std::vector<ImageTensor>& data) {
  if (data.size() < 2) fail(ErrorKind::InvalidArgument, "training needs at least two images");
  const std::size_t batch = static_cast<std::size_t>(config_.batch);
  const auto order = keyed_permutation(config_.seed ^ kShuffleStream ^ (static_cast<std::uint64_t>(epochs_done_) << 32),
                                       data.size());
  EpochRecord record;
  record.epoch = epochs_done_ + 1;
  record.losses.decoder.assign(model_.decoders.size(), 0.0);
  std::size_t steps = 0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t count = std::min(batch, order.size() - start);
    if (count < 2) break;  // batch norm needs two samples
    std::vector<ImageTensor> images;
    for (std::size_t i = 0; i < count; ++i) images.push_back(data[order[start + i]]);
    const Tensor<float> covers = stack_images(images);
    const BatchMessages messages = draw_messages(count);
    record.adversary_loss += adversary_step(covers, messages);
    const LossReport r = encoder_step(covers, messages);
    record.losses.image += r.image;
    for (std::size_t d = 0; d < r.decoder.size(); ++d) record.losses.decoder[d] += r.decoder[d];
    record.losses.balance += r.balance;
    record.losses.message += r.message;
    record.losses.adversarial += r.adversarial;
    record.losses.total += r.total;
    ++steps;
  }
  const double n = static_cast<double>(steps);
  record.adversary_loss /= n;
  record.losses.image /= n;
  for (double& d : record.losses.decoder) d /= n;
  record.losses.balance /= n;
  record.losses.message /= n;
  record.losses.adversarial /= n;
  record.losses.total /= n;
  ++epochs_done_;
  return record;
}

std::vector<EpochRecord> continue_training(Trainer& trainer, const std::vector<ImageBuffer>& dataset,
                                           const TrainCallbacks& callbacks) {
  const TrainConfig& config = trainer.config();
  if (dataset.empty()) fail(ErrorKind::InvalidArgument, "empty training dataset");
  std::vector<ImageTensor> data;
  data.reserve(dataset.size());
  for (const auto& img : dataset) {
    if (img.height != config.model.image.height || img.width != config.model.image.width)
      fail(ErrorKind::ShapeMismatch, "training image does not match the configured size");
    data.push_back(to_tensor(img));
  }
  std::vector<EpochRecord> history;
  while (trainer.epochs_done() < config.epochs) {
    history.push_back(trainer.run_epoch(data));
    if (callbacks.on_epoch) callbacks.on_epoch(history.back());
    const int done = trainer.epochs_done();
    if (callbacks.on_checkpoint && (done % config.checkpoint_interval == 0 || done == config.epochs))
      callbacks.on_checkpoint(trainer);
  }
  return history;
}

TrainResult train(const TrainConfig& config, const std::vector<ImageBuffer>& dataset, const TrainCallbacks& callbacks) {
  Trainer trainer(config);
  TrainResult result;
  result.history = continue_training(trainer, dataset, callbacks);
  result.model = std::move(trainer.model());
  return result;
}

MetricsReport evaluate(const ModelParams<float>& model, const std::vector<ImageBuffer>& dataset, std::uint64_t seed) {
  if (dataset.empty()) fail(ErrorKind::InvalidArgument, "empty evaluation dataset");
  const auto& cfg = model.config;
  SplitMix64 rng(seed ^ kMessageStream);
  MetricsReport report;
  report.bit_error.assign(static_cast<std::size_t>(cfg.decoders), 0.0);
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& cover : dataset) {
    std::vector<BitMessage> messages;
    for (int d = 0; d < cfg.decoders; ++d) messages.push_back(random_message(rng.next(), static_cast<std::size_t>(cfg.bits)));
    const ImageBuffer stego = from_tensor(encode(model, to_tensor(cover), messages));
    const ImageTensor received = to_tensor(stego);
    for (std::size_t d = 0; d < messages.size(); ++d)
      report.bit_error[d] += bit_error(harden(decode(model, d, received)), messages[d]);
    psnr_sum += psnr(cover, stego);
    ssim_sum += ssim(cover, stego);
  }
  const double n = static_cast<double>(dataset.size());
  report.samples = dataset.size();
  report.psnr = psnr_sum / n;
  report.ssim = ssim_sum / n;
  for (double& e : report.bit_error) e /= n;
  return report;
}

namespace {

// JSON has no infinity; an exact reconstruction reports PSNR as null.
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string to_json_line(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["L_I"] = r.losses.image;
  j["L_m"] = r.losses.decoder;
  j["L_b"] = r.losses.balance;
  j["L_M"] = r.losses.message;
  j["L_A"] = r.losses.adversarial;
  j["total"] = r.losses.total;
  j["adv_loss"] = r.adversary_loss;
  return j.dump();
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["psnr"] = finite_or_null(r.psnr);
  j["ssim"] = r.ssim;
  j["bit_error"] = r.bit_error;
  j["samples"] = r.samples;
  return j.dump();
}

}  // namespace dsteg
