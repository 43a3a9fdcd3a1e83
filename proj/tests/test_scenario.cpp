#include <doctest.h>

#include "dsteg/corpus.hpp"
#include "dsteg/scenario.hpp"

using namespace dsteg;

TEST_SUITE("scenario") {
  TEST_CASE("classic coercion walkthrough passes") {
    SplitMix64 rng(12);
    const std::size_t t = 30;
    const DeniableKeyPair keys{{rng.next(), random_message(rng.next(), t)}, {rng.next(), random_message(rng.next(), t)}};
    const BitMessage real = random_message(1, t), fake = random_message(2, t);
    const auto report = run_classic_scenario(procedural_image(4, {32, 32}), real, fake, keys);
    CHECK(report.pass);
    const std::string text = report.transcript();
    CHECK(text.find(to_hex(real)) != std::string::npos);
    CHECK(text.find(to_hex(fake)) != std::string::npos);
    CHECK(text.find("RESULT: PASS") != std::string::npos);
  }

  TEST_CASE("untrained model fails the learned walkthrough") {
    ModelConfig c;
    c.image = {16, 16};
    const auto report = run_dnn_scenario(init_model(c, 1), procedural_corpus(5, 10, {16, 16}), 3);
    CHECK_FALSE(report.pass);
    CHECK(report.transcript().find("RESULT: FAIL") != std::string::npos);
  }
}
