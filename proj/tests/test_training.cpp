#include <doctest.h>

#include <json.hpp>

#include "dsteg/corpus.hpp"
#include "dsteg/training.hpp"

using namespace dsteg;

namespace {

TrainConfig tiny_config(std::uint64_t seed = 3) {
  TrainConfig c;
  c.model.bits = 4;
  c.model.image = {8, 8};
  c.batch = 3;
  c.epochs = 2;
  c.seed = seed;
  c.checkpoint_interval = 1;
  return c;
}

std::vector<ImageTensor> tensors(const std::vector<ImageBuffer>& images) {
  std::vector<ImageTensor> out;
  for (const auto& i : images) out.push_back(to_tensor(i));
  return out;
}

// Snapshot of every tensor in one group, split by role.
std::vector<Tensor<float>> snapshot(ModelParams<float>& m, ParamGroup group, TensorRole role) {
  std::vector<Tensor<float>> out;
  for_each_tensor(m, [&](const std::string&, const Tensor<float>& t, ParamGroup g, TensorRole r) {
    if (g == group && r == role) out.push_back(t);
  });
  return out;
}

bool unchanged(const std::vector<Tensor<float>>& a, const std::vector<Tensor<float>>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bitwise_equal(a[i], b[i])) return false;
  return true;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("config validation") {
    TrainConfig c = tiny_config();
    CHECK_NOTHROW(c.validate());
    c.batch = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_config();
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = tiny_config();
    c.adam.lr = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("adversary step touches only the adversary") {
    Trainer trainer(tiny_config());
    auto& m = trainer.model();
    const auto covers = stack_images(tensors(procedural_corpus(1, 3, {8, 8})));
    const auto messages = trainer.draw_messages(3);
    const auto enc_w = snapshot(m, ParamGroup::Encoder, TensorRole::Trainable);
    const auto enc_s = snapshot(m, ParamGroup::Encoder, TensorRole::RunningStat);
    const auto dec_w = snapshot(m, ParamGroup::Decoder, TensorRole::Trainable);
    const auto dec_s = snapshot(m, ParamGroup::Decoder, TensorRole::RunningStat);
    const auto adv_w = snapshot(m, ParamGroup::Adversary, TensorRole::Trainable);
    const auto adv_s = snapshot(m, ParamGroup::Adversary, TensorRole::RunningStat);
    const double loss = trainer.adversary_step(covers, messages);
    CHECK(loss > 0.0);
    CHECK(unchanged(enc_w, snapshot(m, ParamGroup::Encoder, TensorRole::Trainable)));
    CHECK(unchanged(enc_s, snapshot(m, ParamGroup::Encoder, TensorRole::RunningStat)));
    CHECK(unchanged(dec_w, snapshot(m, ParamGroup::Decoder, TensorRole::Trainable)));
    CHECK(unchanged(dec_s, snapshot(m, ParamGroup::Decoder, TensorRole::RunningStat)));
    CHECK_FALSE(unchanged(adv_w, snapshot(m, ParamGroup::Adversary, TensorRole::Trainable)));
    CHECK_FALSE(unchanged(adv_s, snapshot(m, ParamGroup::Adversary, TensorRole::RunningStat)));
    CHECK(trainer.adversary_optimizer().step == 1);
    CHECK(trainer.encoder_optimizer().step == 0);
  }

  TEST_CASE("encoder step leaves the adversary untouched") {
    Trainer trainer(tiny_config());
    auto& m = trainer.model();
    const auto covers = stack_images(tensors(procedural_corpus(1, 3, {8, 8})));
    const auto messages = trainer.draw_messages(3);
    const auto enc_w = snapshot(m, ParamGroup::Encoder, TensorRole::Trainable);
    const auto dec_w = snapshot(m, ParamGroup::Decoder, TensorRole::Trainable);
    const auto dec_s = snapshot(m, ParamGroup::Decoder, TensorRole::RunningStat);
    const auto adv_w = snapshot(m, ParamGroup::Adversary, TensorRole::Trainable);
    const auto adv_s = snapshot(m, ParamGroup::Adversary, TensorRole::RunningStat);
    const LossReport r = trainer.encoder_step(covers, messages);
    CHECK(r.decoder.size() == 2);
    CHECK(r.total == doctest::Approx(0.7 * r.image + r.message + 0.001 * r.adversarial));
    CHECK(r.message == doctest::Approx(r.decoder[0] + r.decoder[1] + std::abs(r.decoder[0] - r.decoder[1])));
    CHECK_FALSE(unchanged(enc_w, snapshot(m, ParamGroup::Encoder, TensorRole::Trainable)));
    CHECK_FALSE(unchanged(dec_w, snapshot(m, ParamGroup::Decoder, TensorRole::Trainable)));
    CHECK_FALSE(unchanged(dec_s, snapshot(m, ParamGroup::Decoder, TensorRole::RunningStat)));
    CHECK(unchanged(adv_w, snapshot(m, ParamGroup::Adversary, TensorRole::Trainable)));
    CHECK(unchanged(adv_s, snapshot(m, ParamGroup::Adversary, TensorRole::RunningStat)));
  }

  TEST_CASE("batches need two images and matching messages") {
    Trainer trainer(tiny_config());
    const auto one = stack_images(tensors(procedural_corpus(1, 1, {8, 8})));
    CHECK_THROWS_AS(trainer.encoder_step(one, trainer.draw_messages(1)), Error);
    const auto three = stack_images(tensors(procedural_corpus(1, 3, {8, 8})));
    CHECK_THROWS_AS(trainer.encoder_step(three, trainer.draw_messages(2)), Error);
  }

  TEST_CASE("fresh messages every draw") {
    Trainer a(tiny_config()), b(tiny_config());
    const auto first = a.draw_messages(4);
    CHECK(first == b.draw_messages(4));
    CHECK(first != a.draw_messages(4));
    CHECK(first[0].size() == 2);
    CHECK(first[0][0] != first[0][1]);
  }

  TEST_CASE("epochs drop a final single-image batch") {
    Trainer trainer(tiny_config());
    const auto data = tensors(procedural_corpus(2, 7, {8, 8}));  // batches of 3, 3, 1
    const EpochRecord r = trainer.run_epoch(data);
    CHECK(r.epoch == 1);
    CHECK(trainer.encoder_optimizer().step == 2);
    CHECK(trainer.adversary_optimizer().step == 2);
    CHECK(trainer.epochs_done() == 1);
  }

  TEST_CASE("training is deterministic for a seed") {
    // 12x12 so the evaluation's SSIM window fits.
    auto config = [](std::uint64_t seed) {
      TrainConfig c = tiny_config(seed);
      c.model.image = {12, 12};
      return c;
    };
    const auto data = procedural_corpus(4, 6, {12, 12});
    int checkpoints = 0;
    TrainCallbacks cb;
    cb.on_checkpoint = [&](const Trainer&) { ++checkpoints; };
    const TrainResult a = train(config(5), data, cb);
    const TrainResult b = train(config(5), data);
    const TrainResult c = train(config(6), data);
    CHECK(checkpoints == 2);
    REQUIRE(a.history.size() == 2);
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(to_json_line(a.history[i]) == to_json_line(b.history[i]));
    CHECK(to_json_line(a.history[1]) != to_json_line(c.history[1]));
    const auto val = procedural_corpus(9, 3, {12, 12});
    CHECK(to_json(evaluate(a.model, val, 1)) == to_json(evaluate(b.model, val, 1)));
  }

  TEST_CASE("history and metrics json") {
    EpochRecord r;
    r.epoch = 3;
    r.losses.decoder = {0.1, 0.2};
    r.losses.total = 1.5;
    const auto j = nlohmann::json::parse(to_json_line(r));
    for (const char* key : {"epoch", "L_I", "L_m", "L_b", "L_M", "L_A", "total", "adv_loss"}) CHECK(j.contains(key));
    CHECK(j["L_m"].size() == 2);
    CHECK(j["epoch"] == 3);

    MetricsReport m;
    m.psnr = kInfinitePsnr;
    m.ssim = 1.0;
    m.bit_error = {0.0, 0.5};
    m.samples = 2;
    const auto k = nlohmann::json::parse(to_json(m));
    CHECK(k["psnr"].is_null());
    CHECK(k["bit_error"][1] == 0.5);
    CHECK(k["samples"] == 2);
  }

  TEST_CASE("an untrained model decodes at chance") {
    TrainConfig c = tiny_config();
    c.model.bits = 30;
    c.model.image = {16, 16};
    const auto report = evaluate(init_model(c.model, 1), procedural_corpus(3, 40, {16, 16}), 2);
    CHECK(report.samples == 40);
    for (double e : report.bit_error) {
      CHECK(e > 0.3);
      CHECK(e < 0.7);
    }
  }
}
