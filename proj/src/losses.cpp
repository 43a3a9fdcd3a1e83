#include "dsteg/losses.hpp"

#include <algorithm>

namespace dsteg {

double image_loss(std::span<const double> cover, std::span<const double> stego) {
  if (cover.size() != stego.size()) fail(ErrorKind::ShapeMismatch, "image_loss: size mismatch");
  if (cover.empty()) fail(ErrorKind::InvalidArgument, "image_loss of empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < cover.size(); ++i) sum += (cover[i] - stego[i]) * (cover[i] - stego[i]);
  return sum / static_cast<double>(cover.size());
}

double message_loss(const BitMessage& m, std::span<const double> soft) {
  if (m.size() != soft.size()) fail(ErrorKind::LengthMismatch, "message_loss: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) sum += (m[i] - soft[i]) * (m[i] - soft[i]);
  return sum / static_cast<double>(m.size());
}

double balance_loss(std::span<const double> losses) {
  if (losses.size() < 2) fail(ErrorKind::InvalidArgument, "balance loss needs at least two decoders");
  double sum = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    for (std::size_t j = i + 1; j < losses.size(); ++j) sum += std::abs(losses[i] - losses[j]);
  return sum;
}

double balanced_message_loss(std::span<const double> losses, const LossWeights& w) {
  double sum = 0.0;
  for (double l : losses) sum += l;
  return w.decoder * sum + w.balance * balance_loss(losses);
}

namespace {

double clamp_probability(double p) { return std::clamp(p, ad::kLogClamp, 1.0 - ad::kLogClamp); }

}  // namespace

double adversary_bce(double prediction, int label) {
  const double p = clamp_probability(prediction);
  const double y = label ? 1.0 : 0.0;
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

double adversarial_loss(double prediction_on_stego) {
  return -std::log(1.0 - clamp_probability(prediction_on_stego));
}

double total_objective(double image, double message, double adversarial, const LossWeights& w) {
  return w.image * image + w.message * message + w.adversarial * adversarial;
}

LossReport total_loss(double image, std::span<const double> decoder_losses, double adversarial, const LossWeights& w) {
  LossReport r;
  r.image = image;
  r.decoder.assign(decoder_losses.begin(), decoder_losses.end());
  r.balance = balance_loss(decoder_losses);
  r.message = balanced_message_loss(decoder_losses, w);
  r.adversarial = adversarial;
  r.total = total_objective(r.image, r.message, r.adversarial, w);
  return r;
}

}  // namespace dsteg
