#include "dsteg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dsteg/bitmsg.hpp"

namespace dsteg {

using ad::Tape;
using ad::Var;

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  Tensor<double> t(shape);
  SplitMix64 rng(seed);
  for (Index i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.uniform();
  return t;
}

namespace {

double evaluate(const GradCheckFn& fn, const std::vector<Tensor<double>>& inputs, const Tensor<double>& projection) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& in : inputs) vars.push_back(tape.constant(in));
  const Var<double> out = fn(vars);
  return (out.value().array() * projection.array()).sum();
}

}  // namespace

GradCheckReport grad_check(const std::string& name, const GradCheckFn& fn, std::vector<Tensor<double>> inputs,
                           double tolerance, std::uint64_t seed) {
  constexpr double kStep = 1e-5;
  constexpr double kFloor = 1e-4;

  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& in : inputs) vars.push_back(tape.variable(in));
  const Var<double> out = fn(vars);
  const Tensor<double> projection = out.value().size() == 1 ? Tensor<double>::constant(out.shape(), 1.0)
                                                            : random_tensor(out.shape(), seed ^ 0xA5A5u);
  tape.backward(ad::dot(out, projection));

  GradCheckReport report{name, 0.0, tolerance, false};
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = tape.grad(vars[k].id());
    for (Index i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + kStep;
      const double up = evaluate(fn, inputs, projection);
      inputs[k][i] = saved - kStep;
      const double down = evaluate(fn, inputs, projection);
      inputs[k][i] = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor});
      report.max_relative_error = std::max(report.max_relative_error, err);
    }
  }
  report.pass = report.max_relative_error <= tolerance;
  return report;
}

namespace {

// Moves values off the ReLU kink so the finite difference never straddles it.
Tensor<double> away_from_zero(Tensor<double> t, double margin = 1e-2) {
  for (Index i = 0; i < t.size(); ++i)
    if (std::abs(t[i]) < margin) t[i] = t[i] < 0 ? t[i] - margin : t[i] + margin;
  return t;
}

}  // namespace

std::vector<GradCheckReport> run_gradient_suite(double conv_tolerance, double elementwise_tolerance) {
  std::vector<GradCheckReport> out;
  auto check = [&](const std::string& name, const GradCheckFn& fn, std::vector<Tensor<double>> inputs, double tol) {
    out.push_back(grad_check(name, fn, std::move(inputs), tol));
  };

  check(
      "conv2d", [](auto v) { return ad::conv2d(v[0], v[1], v[2], 1, 1); },
      {random_tensor({2, 3, 5, 4}, 1), random_tensor({4, 3, 3, 3}, 2), random_tensor({4}, 3)}, conv_tolerance);
  check(
      "conv2d_stride2_pad0", [](auto v) { return ad::conv2d(v[0], v[1], v[2], 2, 0); },
      {random_tensor({1, 2, 7, 5}, 4), random_tensor({3, 2, 3, 3}, 5), random_tensor({3}, 6)}, conv_tolerance);
  check(
      "batch_norm_train",
      [](auto v) {
        return ad::batch_norm<double>(v[0], v[1], v[2], nullptr, {ad::Mode::Train, false});
      },
      {random_tensor({3, 2, 3, 2}, 7), random_tensor({2}, 8, 0.5, 1.5), random_tensor({2}, 9)}, conv_tolerance);
  check(
      "batch_norm_eval",
      [](auto v) {
        ad::RunningStats<double> stats{random_tensor({2}, 10), random_tensor({2}, 11, 0.5, 2.0)};
        return ad::batch_norm<double>(v[0], v[1], v[2], &stats, {ad::Mode::Eval});
      },
      {random_tensor({2, 2, 3, 3}, 12), random_tensor({2}, 13, 0.5, 1.5), random_tensor({2}, 14)}, conv_tolerance);
  check(
      "relu", [](auto v) { return ad::relu(v[0]); }, {away_from_zero(random_tensor({2, 3, 4, 4}, 15))},
      elementwise_tolerance);
  check(
      "sigmoid", [](auto v) { return ad::sigmoid(v[0]); }, {random_tensor({2, 7}, 16, -4.0, 4.0)},
      elementwise_tolerance);
  check(
      "linear", [](auto v) { return ad::linear(v[0], v[1], v[2]); },
      {random_tensor({3, 5}, 17), random_tensor({4, 5}, 18), random_tensor({4}, 19)}, elementwise_tolerance);
  check(
      "concat_channels", [](auto v) { return ad::concat_channels<double>({v[0], v[1], v[2]}); },
      {random_tensor({2, 3, 2, 2}, 20), random_tensor({2, 1, 2, 2}, 21), random_tensor({2, 2, 2, 2}, 22)},
      elementwise_tolerance);
  check(
      "adaptive_avg_pool", [](auto v) { return ad::adaptive_avg_pool(v[0]); }, {random_tensor({2, 3, 4, 5}, 23)},
      elementwise_tolerance);
  check(
      "mse", [](auto v) { return ad::mse(v[0], v[1]); }, {random_tensor({2, 3, 4}, 24), random_tensor({2, 3, 4}, 25)},
      elementwise_tolerance);
  const Tensor<double> labels({6}, (Eigen::ArrayXd(6) << 0, 1, 1, 0, 1, 0).finished());
  check(
      "bce", [labels](auto v) { return ad::bce(v[0], labels); }, {random_tensor({6}, 26, 0.05, 0.95)},
      elementwise_tolerance);
  check(
      "abs_diff", [](auto v) { return ad::abs_diff(v[0], v[1]); },
      {Tensor<double>::scalar(0.2), Tensor<double>::scalar(0.5)}, elementwise_tolerance);
  check(
      "weighted_sum", [](auto v) { return ad::weighted_sum<double>({v[0], v[1]}, {0.7, -2.5}); },
      {random_tensor({3}, 27), random_tensor({3}, 28)}, elementwise_tolerance);
  return out;
}

}  // namespace dsteg
