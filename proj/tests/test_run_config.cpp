#include <doctest.h>

#include "dsteg/run_config.hpp"

using namespace dsteg;

TEST_SUITE("run_config") {
  TEST_CASE("defaults round-trip") {
    const TrainConfig c;
    CHECK(parse_run_config(render_run_config(c)) == c);
    CHECK(parse_run_config("") == c);
  }

  TEST_CASE("every field round-trips") {
    SplitMix64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      TrainConfig c;
      c.model.decoders = 2 + static_cast<int>(rng.below(5));
      c.model.bits = 1 + static_cast<int>(rng.below(64));
      c.model.image = {static_cast<Index>(1 + rng.below(128)), static_cast<Index>(1 + rng.below(128))};
      c.epochs = 1 + static_cast<int>(rng.below(400));
      c.batch = 2 + static_cast<int>(rng.below(30));
      c.seed = rng.next();
      c.checkpoint_interval = 1 + static_cast<int>(rng.below(20));
      c.model.weights = {rng.uniform(), rng.uniform(), rng.uniform() * 1e-3, 2.0 / 4.0, 1.0 / 6.0};
      c.adam = {rng.uniform() * 1e-2, 0.9, 0.999, 1e-8};
      c.train_dir = "data/train set " + std::to_string(trial);
      c.val_dir = "/tmp/val";
      CHECK(parse_run_config(render_run_config(c)) == c);
    }
  }

  TEST_CASE("parsing") {
    const TrainConfig c = parse_run_config(
        "# desk run\n"
        "decoders = 4\n"
        "  bits=15  \n"
        "\n"
        "lambda_decoder = 0.5   # 2/4\n"
        "seed = 0x10\n");
    CHECK(c.model.decoders == 4);
    CHECK(c.model.bits == 15);
    CHECK(c.model.weights.decoder == 0.5);
    CHECK(c.seed == 16);
    CHECK(c.epochs == 300);
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(parse_run_config("learning_rate = 1\n"), Error);
    CHECK_THROWS_AS(parse_run_config("bits\n"), Error);
    CHECK_THROWS_AS(parse_run_config("bits = many\n"), Error);
    CHECK_THROWS_AS(parse_run_config("bits = 3x\n"), Error);
    CHECK_THROWS_AS(parse_run_config("bits = 3\nbits = 4\n"), Error);
    TrainConfig c;
    c.train_dir = "with # hash";
    CHECK_THROWS_AS(render_run_config(c), Error);
  }
}
