// dsteg: command-line front end for the deniable steganography toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dsteg/classic.hpp"
#include "dsteg/corpus.hpp"
#include "dsteg/gradcheck.hpp"
#include "dsteg/model_io.hpp"
#include "dsteg/run_config.hpp"
#include "dsteg/scenario.hpp"
#include "dsteg/training.hpp"

using namespace dsteg;

namespace {

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  std::string_view s = text;
  int base = 10;
  if (s.starts_with("0x") || s.starts_with("0X")) {
    s.remove_prefix(2);
    base = 16;
  }
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size())
    fail(ErrorKind::InvalidArgument, "invalid seed '" + text + "'");
  return v;
}

std::size_t decoder_index(const std::string& name, const ModelConfig& config) {
  std::size_t index = 0;
  if (name == "real") {
    index = 0;
  } else if (name == "fake") {
    index = 1;
  } else {
    const auto r = std::from_chars(name.data(), name.data() + name.size(), index);
    if (name.empty() || r.ec != std::errc{} || r.ptr != name.data() + name.size())
      fail(ErrorKind::InvalidArgument, "decoder must be real, fake or an index, got '" + name + "'");
  }
  if (index >= static_cast<std::size_t>(config.decoders))
    fail(ErrorKind::InvalidArgument, "model has " + std::to_string(config.decoders) + " decoders, no decoder " +
                                         std::to_string(index));
  return index;
}

Slot parse_slot(const std::string& which) {
  if (which == "real") return Slot::Real;
  if (which == "fake") return Slot::Fake;
  fail(ErrorKind::InvalidArgument, "--which must be real or fake");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(s.substr(start, comma - start));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

ImageBuffer load_cover(const std::string& path) { return decode_png(path); }

std::vector<ImageBuffer> load_dir(const std::string& dir, Size2 size) { return load_dataset(list_dataset(dir, size)); }

struct TrainArgs {
  std::string config_file, save_config, data, val, out, history, checkpoint, resume;
  std::optional<int> decoders, bits, epochs, batch, size, checkpoint_interval;
  std::optional<double> lambda_i, lambda_big_m, lambda_m, lambda_b, lambda_a, lr;
  std::optional<std::string> seed;
};

TrainConfig resolve(const TrainArgs& a) {
  TrainConfig c = a.config_file.empty() ? TrainConfig{} : parse_run_config(read_file(a.config_file));
  if (!a.data.empty()) c.train_dir = a.data;
  if (!a.val.empty()) c.val_dir = a.val;
  if (a.decoders) c.model.decoders = *a.decoders;
  if (a.bits) c.model.bits = *a.bits;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.batch) c.batch = *a.batch;
  if (a.size) c.model.image = {*a.size, *a.size};
  if (a.checkpoint_interval) c.checkpoint_interval = *a.checkpoint_interval;
  if (a.lambda_i) c.model.weights.image = *a.lambda_i;
  if (a.lambda_big_m) c.model.weights.message = *a.lambda_big_m;
  if (a.lambda_m) c.model.weights.decoder = *a.lambda_m;
  if (a.lambda_b) c.model.weights.balance = *a.lambda_b;
  if (a.lambda_a) c.model.weights.adversarial = *a.lambda_a;
  if (a.lr) c.adam.lr = *a.lr;
  if (a.seed) c.seed = parse_seed(*a.seed);
  c.validate();
  if (c.train_dir.empty()) fail(ErrorKind::InvalidArgument, "no training directory: pass --data or set train_dir");
  return c;
}

int run_train(const TrainArgs& a) {
  const TrainConfig config = resolve(a);
  if (!a.save_config.empty()) write_file(a.save_config, render_run_config(config));
  const auto dataset = load_dir(config.train_dir, config.model.image);
  Trainer trainer = a.resume.empty() ? Trainer(config) : load_checkpoint(a.resume, config);

  std::ofstream history_file;
  std::ostream* history = &std::cout;
  if (!a.history.empty()) {
    history_file.open(a.history, a.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!history_file) fail(ErrorKind::Io, "cannot open " + a.history);
    history = &history_file;
  }
  const std::string checkpoint = a.checkpoint.empty() ? a.out + ".ckpt" : a.checkpoint;
  TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochRecord& r) { *history << to_json_line(r) << std::endl; };
  callbacks.on_checkpoint = [&](const Trainer& t) { save_checkpoint(checkpoint, t); };
  continue_training(trainer, dataset, callbacks);
  save_model(a.out, trainer.model());

  if (!config.val_dir.empty()) {
    const auto val = load_dir(config.val_dir, config.model.image);
    std::cerr << "validation " << to_json(evaluate(trainer.model(), val, config.seed)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receiver-deniable image steganography"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train encoder, decoders and adversary");
  train->add_option("--data", ta.data, "Directory of training PNGs");
  train->add_option("--val", ta.val, "Directory of validation PNGs, evaluated after training");
  train->add_option("--out", ta.out, "Output model file")->required();
  train->add_option("--config", ta.config_file, "key = value run configuration; flags override it");
  train->add_option("--save-config", ta.save_config, "Write the resolved run configuration here");
  train->add_option("--decoders", ta.decoders, "Number of decoders N (default 2)");
  train->add_option("--bits", ta.bits, "Bits per message t (default 30)");
  train->add_option("--epochs", ta.epochs, "Epochs (default 300)");
  train->add_option("--batch", ta.batch, "Batch size (default 12)");
  train->add_option("--size", ta.size, "Square image size (default 32)");
  train->add_option("--lambda-i", ta.lambda_i, "Image loss weight (default 0.7)");
  train->add_option("--lambda-M", ta.lambda_big_m, "Message loss weight (default 1.0)");
  train->add_option("--lambda-m", ta.lambda_m, "Per-decoder message loss weight (default 1.0)");
  train->add_option("--lambda-b", ta.lambda_b, "Balance loss weight (default 1.0)");
  train->add_option("--lambda-a", ta.lambda_a, "Adversarial loss weight (default 0.001)");
  train->add_option("--lr", ta.lr, "Adam learning rate (default 1e-3)");
  train->add_option("--seed", ta.seed, "Seed, decimal or 0x hex (default 1)");
  train->add_option("--checkpoint", ta.checkpoint, "Checkpoint path (default OUT.ckpt)");
  train->add_option("--checkpoint-interval", ta.checkpoint_interval, "Epochs between checkpoints (default 10)");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train->add_option("--history", ta.history, "Write JSON-lines history here instead of stdout");

  std::string model_path, cover_path, msg, out_path, stego_path, decoder_name, data_dir, seed_text = "0";
  auto* embed = app.add_subcommand("embed", "Hide one message per decoder in a cover image");
  embed->add_option("--model", model_path)->required();
  embed->add_option("--cover", cover_path)->required();
  embed->add_option("--msg", msg, "HEX[,HEX...] in decoder order")->required();
  embed->add_option("--out", out_path)->required();

  auto* extract = app.add_subcommand("extract", "Recover the message of one decoder");
  extract->add_option("--model", model_path)->required();
  extract->add_option("--stego", stego_path)->required();
  extract->add_option("--decoder", decoder_name, "real, fake or a decoder index")->required();

  auto* eval = app.add_subcommand("evaluate", "PSNR, SSIM and bit errors over a directory");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--seed", seed_text);

  double tolerance = 1e-4, elementwise_tolerance = 1e-6;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable primitive");
  grad->add_option("--tolerance", tolerance, "Relative error bound for convolution and batch norm");
  grad->add_option("--elementwise-tolerance", elementwise_tolerance, "Bound for elementwise ops and losses");

  std::string real_hex, fake_hex, pad_real, pad_fake, pad, which, seed_real, seed_fake;
  std::size_t bits = 0;
  auto* cembed = app.add_subcommand("classic-embed", "One-time-pad LSB embedding of a real and a fake message");
  cembed->add_option("--cover", cover_path)->required();
  cembed->add_option("--real", real_hex)->required();
  cembed->add_option("--fake", fake_hex)->required();
  cembed->add_option("--seed-real", seed_real)->required();
  cembed->add_option("--seed-fake", seed_fake)->required();
  cembed->add_option("--pad-real", pad_real)->required();
  cembed->add_option("--pad-fake", pad_fake)->required();
  cembed->add_option("--bits", bits, "Message length (default: 4 bits per hex digit)");
  cembed->add_option("--out", out_path)->required();

  auto* cextract = app.add_subcommand("classic-extract", "Recover one classic message with its pad");
  cextract->add_option("--stego", stego_path)->required();
  cextract->add_option("--which", which, "real or fake")->required();
  cextract->add_option("--seed-real", seed_real)->required();
  cextract->add_option("--seed-fake", seed_fake)->required();
  cextract->add_option("--pad", pad)->required();
  cextract->add_option("--bits", bits)->required();

  auto* forge = app.add_subcommand("forge-key", "Pad that opens a slot as a chosen fake message");
  forge->add_option("--stego", stego_path)->required();
  forge->add_option("--which", which, "Slot to forge over (real or fake)")->required();
  forge->add_option("--seed-real", seed_real)->required();
  forge->add_option("--seed-fake", seed_fake)->required();
  forge->add_option("--fake", fake_hex)->required();
  forge->add_option("--bits", bits)->required();

  std::string mode = "classic";
  std::size_t count = 100;
  int size = 32;
  auto* scenario = app.add_subcommand("scenario", "Coercion walkthrough, printed as a transcript");
  scenario->add_option("--mode", mode, "classic or dnn")->check(CLI::IsMember({"classic", "dnn"}));
  scenario->add_option("--model", model_path, "Trained model (dnn mode)");
  scenario->add_option("--data", data_dir, "Cover directory; procedural covers when omitted");
  scenario->add_option("--count", count, "Procedural covers in dnn mode");
  scenario->add_option("--seed", seed_text);

  auto* corpus = app.add_subcommand("make-corpus", "Write a procedural PNG corpus");
  corpus->add_option("--out", out_path)->required();
  corpus->add_option("--count", count)->required();
  corpus->add_option("--seed", seed_text);
  corpus->add_option("--size", size, "Square image size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(ta);

    if (*embed) {
      const auto model = load_model(model_path);
      std::vector<BitMessage> messages;
      for (const auto& hex : split_commas(msg)) messages.push_back(parse_hex(hex, static_cast<std::size_t>(model.config.bits)));
      const ImageBuffer cover = load_image(cover_path, model.config.image);
      write_png(out_path, from_tensor(encode(model, to_tensor(cover), messages)));
      return 0;
    }
    if (*extract) {
      const auto model = load_model(model_path);
      const std::size_t d = decoder_index(decoder_name, model.config);
      const ImageBuffer stego = load_image(stego_path, model.config.image);
      std::cout << to_hex(harden(decode(model, d, to_tensor(stego)))) << '\n';
      return 0;
    }
    if (*eval) {
      const auto model = load_model(model_path);
      std::cout << to_json(evaluate(model, load_dir(data_dir, model.config.image), parse_seed(seed_text))) << '\n';
      return 0;
    }
    if (*grad) {
      const auto reports = run_gradient_suite(tolerance, elementwise_tolerance);
      nlohmann::json j = nlohmann::json::array();
      bool ok = true;
      for (const auto& r : reports) {
        j.push_back({{"name", r.name}, {"max_relative_error", r.max_relative_error}, {"tolerance", r.tolerance},
                     {"pass", r.pass}});
        ok &= r.pass;
      }
      std::cout << nlohmann::json{{"pass", ok}, {"checks", j}}.dump(2) << '\n';
      return ok ? 0 : 1;
    }
    if (*cembed) {
      const std::size_t t = bits ? bits : 4 * real_hex.size();
      DeniableKeyPair keys{{parse_seed(seed_real), parse_hex(pad_real, t)}, {parse_seed(seed_fake), parse_hex(pad_fake, t)}};
      write_png(out_path, classic_embed(load_cover(cover_path), parse_hex(real_hex, t), parse_hex(fake_hex, t), keys));
      return 0;
    }
    if (*cextract) {
      const BitMessage m = classic_extract(load_cover(stego_path), parse_seed(seed_real), parse_seed(seed_fake),
                                           parse_hex(pad, bits), parse_slot(which), bits);
      std::cout << to_hex(m) << '\n';
      return 0;
    }
    if (*forge) {
      const Ciphertext x = read_slot(load_cover(stego_path), parse_seed(seed_real), parse_seed(seed_fake),
                                     parse_slot(which), bits);
      std::cout << to_hex(forge_key(x, parse_hex(fake_hex, bits))) << '\n';
      return 0;
    }
    if (*scenario) {
      const std::uint64_t seed = parse_seed(seed_text);
      ScenarioReport report;
      if (mode == "classic") {
        const ImageBuffer cover = data_dir.empty() ? procedural_image(seed, {32, 32})
                                                   : load_dir(data_dir, {32, 32}).front();
        SplitMix64 rng(seed);
        const std::size_t t = 30;
        DeniableKeyPair keys{{rng.next(), random_message(rng.next(), t)}, {rng.next(), random_message(rng.next(), t)}};
        report = run_classic_scenario(cover, random_message(rng.next(), t), random_message(rng.next(), t), keys);
      } else {
        if (model_path.empty()) fail(ErrorKind::InvalidArgument, "--model is required in dnn mode");
        const auto model = load_model(model_path);
        const auto covers = data_dir.empty() ? procedural_corpus(seed, count, model.config.image)
                                             : load_dir(data_dir, model.config.image);
        report = run_dnn_scenario(model, covers, seed);
      }
      std::cout << report.transcript();
      return report.pass ? 0 : 1;
    }
    if (*corpus) {
      write_corpus(out_path, parse_seed(seed_text), count, {size, size});
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "dsteg: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dsteg: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
