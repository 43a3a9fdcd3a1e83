#include "dsteg/networks.hpp"

namespace dsteg {

BitMessage harden(const SoftBits& soft) {
  std::vector<std::uint8_t> bits(soft.size());
  for (std::size_t i = 0; i < soft.size(); ++i) bits[i] = soft[i] >= 0.5 ? 1 : 0;
  return BitMessage(std::move(bits));
}

void validate_messages(const ModelConfig& config, const std::vector<BitMessage>& messages) {
  if (messages.size() != static_cast<std::size_t>(config.decoders))
    fail(ErrorKind::InvalidArgument, "expected " + std::to_string(config.decoders) + " messages, got " +
                                         std::to_string(messages.size()));
  for (const auto& msg : messages)
    if (msg.size() != static_cast<std::size_t>(config.bits))
      fail(ErrorKind::LengthMismatch, "expected " + std::to_string(config.bits) + "-bit messages, got " +
                                          std::to_string(msg.size()));
}

namespace {

// Eval-mode forwards never write to the model, so the const_cast below only
// satisfies the binder's signature.
ModelParams<float>& readonly(const ModelParams<float>& m) { return const_cast<ModelParams<float>&>(m); }

Tensor<float> as_batch(const ImageTensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    fail(ErrorKind::ShapeMismatch, "expected a [3,H,W] image, got " + shape_string(img.shape()));
  return img.reshaped({1, 3, img.dim(1), img.dim(2)});
}

}  // namespace

ImageTensor encode(const ModelParams<float>& m, const ImageTensor& cover, const std::vector<BitMessage>& messages) {
  validate_messages(m.config, messages);
  const Tensor<float> batch = as_batch(cover);
  if (batch.dim(2) != m.config.image.height || batch.dim(3) != m.config.image.width)
    fail(ErrorKind::ShapeMismatch, "cover is " + std::to_string(batch.dim(3)) + "x" + std::to_string(batch.dim(2)) +
                                       ", model expects " + std::to_string(m.config.image.width) + "x" +
                                       std::to_string(m.config.image.height));
  ad::Tape<float> tape;
  ParamBinder<float> binder(tape, {});
  const auto planes = ad::replicate_bits<float>({messages}, batch.dim(2), batch.dim(3));
  const auto stego = encoder_forward(binder, readonly(m), tape.constant(batch), planes, {ad::Mode::Eval, false});
  return stego.value().reshaped(cover.shape());
}

SoftBits decode(const ModelParams<float>& m, std::size_t which, const ImageTensor& stego) {
  ad::Tape<float> tape;
  ParamBinder<float> binder(tape, {});
  const auto soft =
      decoder_forward(binder, readonly(m), which, tape.constant(as_batch(stego)), {ad::Mode::Eval, false});
  SoftBits out(static_cast<std::size_t>(soft.value().size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = soft.value()[static_cast<Index>(i)];
  return out;
}

double discriminate(const ModelParams<float>& m, const ImageTensor& image) {
  ad::Tape<float> tape;
  ParamBinder<float> binder(tape, {});
  const auto p = adversary_forward(binder, readonly(m), tape.constant(as_batch(image)), {ad::Mode::Eval, false});
  return p.value().item();
}

}  // namespace dsteg
