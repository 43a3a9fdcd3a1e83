#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "dsteg/corpus.hpp"
#include "dsteg/model_io.hpp"

using namespace dsteg;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.bits = 5;
  c.image = {8, 8};
  c.weights.balance = 1.0 / 6.0;
  return c;
}

std::vector<std::pair<std::string, const Tensor<float>*>> tensors_of(const ModelParams<float>& m) {
  std::vector<std::pair<std::string, const Tensor<float>*>> out;
  for_each_tensor(m, [&](const std::string& n, const Tensor<float>& t, ParamGroup, TensorRole) { out.emplace_back(n, &t); });
  return out;
}

void check_same(const ModelParams<float>& a, const ModelParams<float>& b) {
  CHECK(a.config == b.config);
  const auto ta = tensors_of(a), tb = tensors_of(b);
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].first == tb[i].first);
    CHECK(bitwise_equal(*ta[i].second, *tb[i].second));
  }
}

ErrorKind kind_of(std::string_view bytes) {
  try {
    model_from_file(parse_model_file(bytes));
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

void put_u32(std::string& s, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s[at + static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

}  // namespace

TEST_SUITE("model_io") {
  TEST_CASE("round trip is bitwise, including running statistics") {
    auto model = init_model(small_config(), 3);
    SplitMix64 rng(1);
    for_each_tensor(model, [&](const std::string&, Tensor<float>& t, ParamGroup, TensorRole role) {
      if (role == TensorRole::RunningStat)
        for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
    });
    const std::string bytes = serialize_model(model);
    check_same(model, model_from_file(parse_model_file(bytes)));
    CHECK(serialize_model(model_from_file(parse_model_file(bytes))) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "dsteg_model_io.dstg";
    save_model(path, model);
    check_same(model, load_model(path));
  }

  TEST_CASE("header layout is little-endian") {
    const std::string bytes = serialize_model(init_model(small_config(), 1));
    CHECK(bytes.substr(0, 4) == "DSTG");
    CHECK(bytes.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
    CHECK(bytes.substr(8, 4) == std::string("\x02\x00\x00\x00", 4));   // decoders
    CHECK(bytes.substr(12, 4) == std::string("\x05\x00\x00\x00", 4));  // bits
    double lambda_b = 0.0;
    std::memcpy(&lambda_b, bytes.data() + 24 + 4 * 8, 8);
    CHECK(lambda_b == 1.0 / 6.0);
  }

  TEST_CASE("corrupt files are rejected") {
    const std::string good = serialize_model(init_model(small_config(), 1));

    std::string magic = good;
    magic.replace(0, 4, "XXXX");
    CHECK(kind_of(magic) == ErrorKind::Format);

    std::string version = good;
    put_u32(version, 4, 2);
    CHECK(kind_of(version) == ErrorKind::Unsupported);

    CHECK(kind_of(good.substr(0, good.size() - 3)) == ErrorKind::Format);
    CHECK(kind_of(good.substr(0, 10)) == ErrorKind::Format);
    CHECK(kind_of(good + "x") == ErrorKind::Format);

    // First tensor: count at 64, name length at 68, name, rank, then the first dim.
    const std::size_t name_len = static_cast<unsigned char>(good[68]);
    std::string overflow = good;
    const std::size_t dim_at = 72 + name_len + 4;
    for (int i = 0; i < 8; ++i) overflow[dim_at + static_cast<std::size_t>(i)] = '\xFF';
    CHECK(kind_of(overflow) == ErrorKind::Format);

    std::string wrong_shape = good;
    wrong_shape[dim_at] = static_cast<char>(wrong_shape[dim_at] + 1);
    CHECK(kind_of(wrong_shape) == ErrorKind::Format);

    CHECK_THROWS_AS(load_model("/nonexistent/model.dstg"), Error);
  }

  TEST_CASE("checkpoints restore optimizer state and continue identically") {
    TrainConfig config;
    config.model = small_config();
    config.batch = 3;
    config.epochs = 2;
    config.seed = 4;
    const auto data = procedural_corpus(1, 6, {8, 8});

    Trainer straight(config);
    const auto history = continue_training(straight, data);

    TrainConfig half = config;
    half.epochs = 1;
    Trainer first(half);
    continue_training(first, data);
    const auto path = std::filesystem::temp_directory_path() / "dsteg_checkpoint.dstg";
    save_checkpoint(path, first);
    CHECK(load_model(path).config == config.model);

    Trainer resumed = load_checkpoint(path, config);
    CHECK(resumed.epochs_done() == 1);
    CHECK(resumed.encoder_optimizer().step == first.encoder_optimizer().step);
    const auto rest = continue_training(resumed, data);
    REQUIRE(rest.size() == 1);
    CHECK(to_json_line(rest[0]) == to_json_line(history[1]));
    check_same(resumed.model(), straight.model());
  }
}
