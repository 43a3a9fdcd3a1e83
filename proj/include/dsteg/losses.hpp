#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dsteg/autodiff.hpp"
#include "dsteg/bitmsg.hpp"
#include "dsteg/error.hpp"

namespace dsteg {

/// Weights of the training objective. `decoder` and `balance` combine the
/// per-decoder message losses into the message term; `image`, `message` and
/// `adversarial` combine the three top-level terms.
struct LossWeights {
  double image = 0.7;
  double message = 1.0;
  double adversarial = 0.001;
  double decoder = 1.0;
  double balance = 1.0;

  void validate() const {
    for (double w : {image, message, adversarial, decoder, balance})
      if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::InvalidArgument, "loss weights must be finite and >= 0");
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double image = 0.0;
  std::vector<double> decoder;
  double balance = 0.0;
  double message = 0.0;
  double adversarial = 0.0;
  double total = 0.0;
};

// Plain-number forms, used for reporting and as hand-checkable references.

double image_loss(std::span<const double> cover, std::span<const double> stego);
double message_loss(const BitMessage& m, std::span<const double> soft);
/// Sum of |L_i - L_j| over unordered pairs i < j.
double balance_loss(std::span<const double> losses);
double balanced_message_loss(std::span<const double> losses, const LossWeights& w);
double adversary_bce(double prediction, int label);
/// -log(1 - A(s)) with the same probability clamp as the adversary BCE.
double adversarial_loss(double prediction_on_stego);
/// lambda_I * image + lambda_M * message + lambda_A * adversarial.
double total_objective(double image, double message, double adversarial, const LossWeights& w);
/// Fills `total` (and `message` from the decoder/balance terms) from the components.
LossReport total_loss(double image, std::span<const double> decoder_losses, double adversarial, const LossWeights& w);

// Differentiable forms over a tape.

template <typename Scalar>
ad::Var<Scalar> image_loss(const ad::Var<Scalar>& cover, const ad::Var<Scalar>& stego) {
  return ad::mse(cover, stego);
}

template <typename Scalar>
ad::Var<Scalar> message_loss(const ad::Var<Scalar>& bits, const ad::Var<Scalar>& soft) {
  return ad::mse(bits, soft);
}

template <typename Scalar>
ad::Var<Scalar> balance_loss(const std::vector<ad::Var<Scalar>>& losses) {
  if (losses.size() < 2) fail(ErrorKind::InvalidArgument, "balance loss needs at least two decoders");
  std::vector<ad::Var<Scalar>> pairs;
  for (std::size_t i = 0; i < losses.size(); ++i)
    for (std::size_t j = i + 1; j < losses.size(); ++j) pairs.push_back(ad::abs_diff(losses[i], losses[j]));
  return ad::sum(pairs);
}

template <typename Scalar>
ad::Var<Scalar> balanced_message_loss(const std::vector<ad::Var<Scalar>>& losses, const ad::Var<Scalar>& balance,
                                      const LossWeights& w) {
  std::vector<ad::Var<Scalar>> terms = losses;
  std::vector<Scalar> weights(losses.size(), static_cast<Scalar>(w.decoder));
  terms.push_back(balance);
  weights.push_back(static_cast<Scalar>(w.balance));
  return ad::weighted_sum(terms, weights);
}

/// Mean over the batch of -log(1 - A(s)).
template <typename Scalar>
ad::Var<Scalar> adversarial_loss(const ad::Var<Scalar>& prediction_on_stego) {
  return ad::bce(prediction_on_stego, Tensor<Scalar>(prediction_on_stego.shape()));
}

template <typename Scalar>
ad::Var<Scalar> total_loss(const ad::Var<Scalar>& image, const ad::Var<Scalar>& message,
                           const ad::Var<Scalar>& adversarial, const LossWeights& w) {
  return ad::weighted_sum<Scalar>({image, message, adversarial},
                                  {static_cast<Scalar>(w.image), static_cast<Scalar>(w.message),
                                   static_cast<Scalar>(w.adversarial)});
}

}  // namespace dsteg
