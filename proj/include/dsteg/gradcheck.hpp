#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsteg/autodiff.hpp"

namespace dsteg {

struct GradCheckReport {
  std::string name;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

using GradCheckFn = std::function<ad::Var<double>(std::span<const ad::Var<double>>)>;

/// Compare the tape's adjoint of `fn` against central differences (step
/// 1e-5) for every element of every input. Non-scalar outputs are reduced by
/// a fixed random projection. Relative error is |a - n| / max(|a|, |n|, 1e-4).
GradCheckReport grad_check(const std::string& name, const GradCheckFn& fn, std::vector<Tensor<double>> inputs,
                           double tolerance, std::uint64_t seed = 0x5EEDu);

/// Checks every primitive the networks use. Convolution and batch norm are
/// held to `conv_tolerance`, elementwise ops and losses to `elementwise_tolerance`.
std::vector<GradCheckReport> run_gradient_suite(double conv_tolerance = 1e-4, double elementwise_tolerance = 1e-6);

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace dsteg
