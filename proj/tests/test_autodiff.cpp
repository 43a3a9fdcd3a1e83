#include <doctest.h>

#include <cmath>

#include "dsteg/adam.hpp"
#include "dsteg/autodiff.hpp"
#include "dsteg/gradcheck.hpp"

using namespace dsteg;
using ad::Tape;
using ad::Var;

namespace {

// y = x^2 elementwise, but the adjoint forgets the factor 2.
Var<double> broken_square(const Var<double>& x) {
  Tensor<double> out(x.shape(), x.value().array().square());
  return x.tape().record(std::move(out), {x}, [x](Tape<double>& tape, const Tensor<double>& gy) {
    if (auto* dx = tape.grad_sink(x)) dx->array() += gy.array() * x.value().array();
  });
}

Var<double> square(const Var<double>& x) {
  Tensor<double> out(x.shape(), x.value().array().square());
  return x.tape().record(std::move(out), {x}, [x](Tape<double>& tape, const Tensor<double>& gy) {
    if (auto* dx = tape.grad_sink(x)) dx->array() += 2.0 * gy.array() * x.value().array();
  });
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("identity kernel reproduces its input") {
    Tape<double> tape;
    const Tensor<double> x = random_tensor({2, 3, 5, 4}, 1);
    Tensor<double> k({3, 3, 3, 3});
    for (Index c = 0; c < 3; ++c) k[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
    const auto y = ad::conv2d(tape.constant(x), tape.constant(k), tape.constant(Tensor<double>({3})));
    CHECK(bitwise_equal(y.value(), x));
  }

  TEST_CASE("convolution matches a direct sum") {
    Tape<double> tape;
    const Tensor<double> x = random_tensor({2, 2, 5, 7}, 2);
    const Tensor<double> k = random_tensor({3, 2, 3, 3}, 3);
    const Tensor<double> b = random_tensor({3}, 4);
    for (Index stride : {1, 2}) {
      const Index pad = stride == 1 ? 1 : 0;
      const auto y = ad::conv2d(tape.constant(x), tape.constant(k), tape.constant(b), stride, pad);
      const Index oh = y.shape()[2], ow = y.shape()[3];
      CHECK(oh == (5 + 2 * pad - 3) / stride + 1);
      double worst = 0.0;
      for (Index n = 0; n < 2; ++n)
        for (Index o = 0; o < 3; ++o)
          for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox) {
              double s = b[o];
              for (Index c = 0; c < 2; ++c)
                for (Index ky = 0; ky < 3; ++ky)
                  for (Index kx = 0; kx < 3; ++kx) {
                    const Index iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                    if (iy < 0 || iy >= 5 || ix < 0 || ix >= 7) continue;
                    s += k[((o * 2 + c) * 3 + ky) * 3 + kx] * x[((n * 2 + c) * 5 + iy) * 7 + ix];
                  }
              worst = std::max(worst, std::abs(s - y.value()[((n * 3 + o) * oh + oy) * ow + ox]));
            }
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("convolution shape errors") {
    Tape<double> tape;
    const auto x = tape.constant(random_tensor({1, 2, 4, 4}, 1));
    const auto b = tape.constant(Tensor<double>({3}));
    CHECK_THROWS_AS(ad::conv2d(x, tape.constant(random_tensor({3, 1, 3, 3}, 2)), b), Error);
    CHECK_THROWS_AS(ad::conv2d(x, tape.constant(random_tensor({3, 2, 2, 2}, 2)), b), Error);
    // (4 + 0 - 3) / 2 is not an integer
    CHECK_THROWS_AS(ad::conv2d(x, tape.constant(random_tensor({3, 2, 3, 3}, 2)), b, 2, 0), Error);
  }

  TEST_CASE("batch norm normalizes in train mode and tracks running stats") {
    Tape<double> tape;
    const Tensor<double> x = random_tensor({4, 3, 5, 5}, 8, -3.0, 7.0);
    ad::RunningStats<double> stats = ad::RunningStats<double>::identity(3);
    const auto y = ad::batch_norm(tape.constant(x), tape.constant(Tensor<double>::constant({3}, 1.0)),
                                  tape.constant(Tensor<double>({3})), &stats);
    for (Index c = 0; c < 3; ++c) {
      double s = 0, ss = 0, xs = 0, xss = 0;
      for (Index b = 0; b < 4; ++b)
        for (Index i = 0; i < 25; ++i) {
          const double v = y.value()[(b * 3 + c) * 25 + i];
          const double u = x[(b * 3 + c) * 25 + i];
          s += v;
          ss += v * v;
          xs += u;
          xss += u * u;
        }
      CHECK(std::abs(s / 100) < 1e-5);
      CHECK(std::abs(ss / 100 - 1.0) < 1e-5 * 10);
      const double mean = xs / 100, var_unbiased = (xss - 100 * mean * mean) / 99;
      CHECK(stats.mean[c] == doctest::Approx(0.1 * mean));
      CHECK(stats.var[c] == doctest::Approx(0.9 + 0.1 * var_unbiased));
    }
  }

  TEST_CASE("batch norm in eval mode with identity stats is nearly the identity") {
    Tape<double> tape;
    const Tensor<double> x = random_tensor({2, 2, 3, 3}, 5);
    ad::RunningStats<double> stats = ad::RunningStats<double>::identity(2);
    const auto y = ad::batch_norm(tape.constant(x), tape.constant(Tensor<double>::constant({2}, 1.0)),
                                  tape.constant(Tensor<double>({2})), &stats, {ad::Mode::Eval});
    CHECK(((y.value().array() - x.array() / std::sqrt(1.0 + 1e-5)).abs().maxCoeff()) < 1e-12);
    ad::RunningStats<double> none;
    CHECK_THROWS_AS(ad::batch_norm(tape.constant(x), tape.constant(Tensor<double>::constant({2}, 1.0)),
                                   tape.constant(Tensor<double>({2})), &none, {ad::Mode::Eval}),
                    Error);
  }

  TEST_CASE("eval mode leaves running stats untouched, as does train without update") {
    Tape<double> tape;
    const auto x = tape.constant(random_tensor({2, 2, 3, 3}, 5));
    const auto g = tape.constant(Tensor<double>::constant({2}, 1.0));
    const auto b = tape.constant(Tensor<double>({2}));
    ad::RunningStats<double> stats = ad::RunningStats<double>::identity(2);
    const auto before = stats;
    ad::batch_norm(x, g, b, &stats, {ad::Mode::Eval});
    ad::batch_norm(x, g, b, &stats, {ad::Mode::Train, false});
    CHECK(bitwise_equal(stats.mean, before.mean));
    CHECK(bitwise_equal(stats.var, before.var));
  }

  TEST_CASE("tape basics") {
    Tape<double> tape;
    const auto x = tape.variable(Tensor<double>::constant({3}, 2.0));
    const auto c = tape.constant(Tensor<double>::constant({3}, 1.0));
    const auto loss = ad::mse(x, c);
    CHECK(loss.value().item() == doctest::Approx(1.0));
    tape.backward(loss);
    for (Index i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(tape.backward(x), Error);

    Tensor<double> bad({1});
    bad[0] = std::nan("");
    CHECK_THROWS_AS(ad::relu(tape.constant(bad)), Error);
  }

  TEST_CASE("bce clamps probabilities") {
    Tape<double> tape;
    Tensor<double> p({2, 1});
    p[0] = 0.0;
    p[1] = 1.0;
    Tensor<double> y({2, 1});
    y[1] = 1.0;
    CHECK(ad::bce(tape.constant(p), y).value().item() == doctest::Approx(-std::log(1.0 - 1e-6)));
    y[0] = 1.0;
    y[1] = 0.0;
    CHECK(ad::bce(tape.constant(p), y).value().item() == doctest::Approx(-std::log(1e-6)));
  }

  TEST_CASE("gradient suite passes") {
    for (const auto& r : run_gradient_suite()) {
      INFO(r.name << " max relative error " << r.max_relative_error);
      CHECK(r.pass);
      CHECK(r.max_relative_error <= r.tolerance);
    }
  }

  TEST_CASE("a broken adjoint is caught") {
    const auto x = random_tensor({5}, 3);
    const auto good = grad_check(
        "square", [](std::span<const Var<double>> in) { return ad::sum<double>({square(in[0])}); }, {x}, 1e-6);
    CHECK(good.pass);
    const auto bad = grad_check(
        "broken square", [](std::span<const Var<double>> in) { return ad::sum<double>({broken_square(in[0])}); },
        {x}, 1e-6);
    CHECK_FALSE(bad.pass);
    CHECK(bad.max_relative_error > 0.1);
  }

  TEST_CASE("adam first step") {
    AdamState<double> state;
    Tensor<double> p({1});
    Tensor<double> g = Tensor<double>::constant({1}, 2.0);
    Tensor<double>* params[] = {&p};
    adam_step<double>(state, params, std::span<const Tensor<double>>(&g, 1));
    CHECK(std::abs(p[0] - (-1e-3)) < 1e-6);
    CHECK(state.step == 1);
  }

  TEST_CASE("adam follows the reference recurrence") {
    AdamState<double> state;
    Tensor<double> p = Tensor<double>::constant({2}, 0.5);
    double ref[2] = {0.5, 0.5}, m[2] = {0, 0}, v[2] = {0, 0};
    const double grads[3][2] = {{2.0, -0.3}, {2.0, 0.7}, {-1.0, 0.1}};
    for (int t = 1; t <= 3; ++t) {
      Tensor<double> g({2});
      for (int i = 0; i < 2; ++i) {
        g[i] = grads[t - 1][i];
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
        ref[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
      }
      Tensor<double>* params[] = {&p};
      adam_step<double>(state, params, std::span<const Tensor<double>>(&g, 1));
      for (int i = 0; i < 2; ++i) CHECK(std::abs(p[i] - ref[i]) < 1e-9);
    }
  }

  TEST_CASE("adam rejects mismatched gradients") {
    AdamState<double> state;
    Tensor<double> p({2});
    Tensor<double> g({3});
    Tensor<double>* params[] = {&p};
    CHECK_THROWS_AS(adam_step<double>(state, params, std::span<const Tensor<double>>(&g, 1)), Error);
  }
}
