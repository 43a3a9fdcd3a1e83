#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dsteg/gradcheck.hpp"
#include "dsteg/losses.hpp"

using namespace dsteg;

TEST_SUITE("losses") {
  TEST_CASE("image and message losses") {
    const std::vector<double> a{0.0, 0.5, 1.0, 0.25}, b{0.1, 0.5, 0.8, 0.25};
    CHECK(image_loss(a, b) == doctest::Approx((0.01 + 0.04) / 4));
    CHECK(image_loss(a, a) == 0.0);
    const BitMessage m = parse_hex("A", 4);  // 1010
    const std::vector<double> soft{1.0, 0.0, 1.0, 0.0};
    CHECK(message_loss(m, soft) == 0.0);
    const std::vector<double> half(4, 0.5);
    CHECK(message_loss(m, half) == doctest::Approx(0.25));
    CHECK_THROWS_AS(message_loss(m, std::vector<double>(3, 0.5)), Error);
  }

  TEST_CASE("balanced message loss arithmetic") {
    const LossWeights unit;
    const std::vector<double> l{0.2, 0.5};
    CHECK(balance_loss(l) == doctest::Approx(0.3));
    CHECK(balanced_message_loss(l, unit) == doctest::Approx(1.0));
    LossWeights no_balance;
    no_balance.balance = 0.0;
    CHECK(balanced_message_loss(l, no_balance) == doctest::Approx(0.7));

    // Three decoders with lambda_m = 2/3, lambda_b = 1/3.
    LossWeights three;
    three.decoder = 2.0 / 3.0;
    three.balance = 1.0 / 3.0;
    const std::vector<double> l3{0.1, 0.2, 0.4};
    const double pairs = 0.1 + 0.3 + 0.2;
    CHECK(balanced_message_loss(l3, three) == doctest::Approx(2.0 / 3.0 * 0.7 + pairs / 3.0));
    CHECK_THROWS_AS(balance_loss(std::vector<double>{0.1}), Error);
  }

  TEST_CASE("balance loss is zero at equality and symmetric under permutation") {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 10000; ++trial) {
      const std::size_t n = 2 + rng.below(5);
      std::vector<double> l(n);
      for (double& v : l) v = rng.uniform();
      const double base = balance_loss(l);
      CHECK(base >= 0.0);
      std::vector<double> shuffled = l;
      for (std::size_t i = n; i-- > 1;) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
      CHECK(std::abs(balance_loss(shuffled) - base) <= 1e-12);
      std::vector<double> equal(n, l[0]);
      CHECK(balance_loss(equal) == 0.0);
    }
  }

  TEST_CASE("adversary losses") {
    CHECK(adversary_bce(0.5, 0) == doctest::Approx(std::log(2.0)));
    CHECK(adversary_bce(0.5, 1) == doctest::Approx(std::log(2.0)));
    CHECK(adversary_bce(0.9, 1) == doctest::Approx(-std::log(0.9)));
    CHECK(adversarial_loss(0.5) == doctest::Approx(std::log(2.0)));
    CHECK(std::isfinite(adversary_bce(0.0, 1)));
    CHECK(adversary_bce(0.0, 1) == doctest::Approx(-std::log(1e-6)));
  }

  TEST_CASE("total loss example and linearity") {
    const LossWeights w;
    CHECK(std::abs(total_objective(0.01, 1.0, 0.6931, w) - 1.0076931) < 1e-12);

    SplitMix64 rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
      const double li = rng.uniform(), lm = rng.uniform(), la = rng.uniform();
      LossWeights a, b, sum;
      a.image = rng.uniform(), a.message = rng.uniform(), a.adversarial = rng.uniform();
      b.image = rng.uniform(), b.message = rng.uniform(), b.adversarial = rng.uniform();
      sum.image = a.image + b.image, sum.message = a.message + b.message, sum.adversarial = a.adversarial + b.adversarial;
      CHECK(std::abs(total_objective(li, lm, la, sum) - (total_objective(li, lm, la, a) + total_objective(li, lm, la, b))) <
            1e-12);
      // Exact: the same products in the same order.
      CHECK(total_objective(li, lm, la, a) == a.image * li + a.message * lm + a.adversarial * la);
    }
    const std::vector<double> dl{0.2, 0.5};
    const LossReport r = total_loss(0.01, dl, 0.6931, w);
    CHECK(r.message == doctest::Approx(1.0));
    CHECK(r.total == total_objective(0.01, r.message, 0.6931, w));
  }

  TEST_CASE("tape losses agree with the plain forms") {
    ad::Tape<double> tape;
    const LossWeights w;
    const auto l1 = tape.constant(Tensor<double>::scalar(0.2));
    const auto l2 = tape.constant(Tensor<double>::scalar(0.5));
    const auto bal = balance_loss<double>({l1, l2});
    CHECK(bal.value().item() == doctest::Approx(0.3));
    const auto msg = balanced_message_loss<double>({l1, l2}, bal, w);
    CHECK(msg.value().item() == doctest::Approx(1.0));
    const auto tot = total_loss(tape.constant(Tensor<double>::scalar(0.01)), msg,
                                tape.constant(Tensor<double>::scalar(0.6931)), w);
    CHECK(tot.value().item() == doctest::Approx(1.0076931).epsilon(1e-12));

    Tensor<double> p({3, 1});
    p[0] = 0.2, p[1] = 0.7, p[2] = 0.5;
    double expected = 0.0;
    for (Index i = 0; i < 3; ++i) expected += adversarial_loss(p[i]) / 3.0;
    CHECK(adversarial_loss(tape.constant(p)).value().item() == doctest::Approx(expected));
  }

  TEST_CASE("zero adversarial weight removes its gradient") {
    LossWeights w;
    w.adversarial = 0.0;
    const Tensor<double> p = random_tensor({4, 1}, 3, 0.1, 0.9);
    ad::Tape<double> tape;
    const auto pv = tape.variable(p);
    const auto zero = tape.constant(Tensor<double>::scalar(0.0));
    const auto tot = total_loss(zero, zero, adversarial_loss(pv), w);
    tape.backward(tot);
    CHECK(pv.grad().array().abs().maxCoeff() == 0.0);
  }
}
