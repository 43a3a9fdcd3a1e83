#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dsteg/error.hpp"
#include "dsteg/tensor.hpp"

namespace dsteg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor<Scalar>> first_moment;
  std::vector<Tensor<Scalar>> second_moment;
};

/// One bias-corrected Adam update of `params` in place. Moment buffers are
/// created on the first call and must keep matching shapes afterwards.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, std::span<Tensor<Scalar>* const> params,
               std::span<const Tensor<Scalar>> grads) {
  if (params.size() != grads.size()) fail(ErrorKind::LengthMismatch, "adam_step: one gradient per parameter");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape())
      fail(ErrorKind::ShapeMismatch, "adam_step: gradient " + shape_string(grads[i].shape()) + " for parameter " +
                                         shape_string(params[i]->shape()));
    if (!grads[i].all_finite()) fail(ErrorKind::NonFinite, "adam_step: non-finite gradient");
  }
  if (state.first_moment.empty()) {
    for (auto* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size())
    fail(ErrorKind::LengthMismatch, "adam_step: parameter count changed between steps");

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
  const Scalar correction1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, t));
  const Scalar correction2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, t));
  const Scalar lr = static_cast<Scalar>(c.lr), eps = static_cast<Scalar>(c.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i].array();
    auto& v = state.second_moment[i].array();
    if (m.size() != grads[i].size()) fail(ErrorKind::ShapeMismatch, "adam_step: moment shape mismatch");
    const auto& g = grads[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i]->array() -= lr * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

}  // namespace dsteg
