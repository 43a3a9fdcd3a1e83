#include "dsteg/scenario.hpp"

#include <cstdio>
#include <sstream>

#include "dsteg/error.hpp"

namespace dsteg {

namespace {

const char* verdict(bool ok) { return ok ? "yes" : "NO"; }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string hex_u64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llX", static_cast<unsigned long long>(v));
  return buf;
}

class Transcript {
 public:
  explicit Transcript(ScenarioReport& r) : r_(r) {}
  void say(const std::string& who, const std::string& what) {
    std::string label = "[" + who + "]";
    label.resize(12, ' ');
    r_.lines.push_back(label + what);
  }
  bool check(const std::string& who, const std::string& what, bool ok) {
    say(who, what + " ... " + verdict(ok));
    all_ &= ok;
    return ok;
  }
  void finish() {
    r_.pass = all_;
    r_.lines.push_back(std::string("RESULT: ") + (all_ ? "PASS" : "FAIL"));
  }

 private:
  ScenarioReport& r_;
  bool all_ = true;
};

}  // namespace

std::string ScenarioReport::transcript() const {
  std::ostringstream out;
  for (const auto& l : lines) out << l << '\n';
  return out.str();
}

ScenarioReport run_classic_scenario(const ImageBuffer& cover, const BitMessage& real, const BitMessage& fake,
                                    const DeniableKeyPair& keys) {
  ScenarioReport report;
  Transcript t(report);
  const std::size_t bits = real.size();
  t.say("sender", "real message  " + to_hex(real));
  t.say("sender", "fake message  " + to_hex(fake));
  t.say("sender", "real key      seed " + hex_u64(keys.real.seed) + " pad " + to_hex(keys.real.pad));
  t.say("sender", "fake key      seed " + hex_u64(keys.fake.seed) + " pad " + to_hex(keys.fake.pad));
  const ImageBuffer stego = classic_embed(cover, real, fake, keys);
  t.say("sender", "embedded into " + std::to_string(cover.width) + "x" + std::to_string(cover.height) +
                      " cover, PSNR " + fixed(psnr(cover, stego), 2) + " dB");
  t.say("channel", "stego image transmitted");

  const BitMessage normal = classic_extract(stego, keys.real.seed, keys.fake.seed, keys.real.pad, Slot::Real, bits);
  t.check("receiver", "normal extraction " + to_hex(normal) + " equals real message", normal == real);

  t.say("adversary", "coerces the receiver to reveal the key");
  t.say("receiver", "surrenders the fake key");
  const BitMessage coerced = classic_extract(stego, keys.real.seed, keys.fake.seed, keys.fake.pad, Slot::Fake, bits);
  t.check("adversary", "coerced extraction " + to_hex(coerced) + " equals fake message", coerced == fake);
  t.check("adversary", "coerced extraction differs from real message", coerced != real || real == fake);

  const Ciphertext real_slots = read_slot(stego, keys.real.seed, keys.fake.seed, Slot::Real, bits);
  const BitMessage forged = forge_key(real_slots, fake);
  const BitMessage opened = xor_decrypt(real_slots, forged);
  t.check("receiver", "forged pad " + to_hex(forged) + " opens the real slots as the fake message", opened == fake);
  t.finish();
  return report;
}

ScenarioReport run_dnn_scenario(const ModelParams<float>& model, const std::vector<ImageBuffer>& covers,
                                std::uint64_t seed, double max_bit_error) {
  if (covers.empty()) fail(ErrorKind::InvalidArgument, "scenario needs at least one cover");
  const auto& cfg = model.config;
  ScenarioReport report;
  Transcript t(report);
  SplitMix64 rng(seed);
  double err_real = 0.0, err_fake = 0.0, quality = 0.0;
  std::size_t disagreements = 0;
  for (std::size_t i = 0; i < covers.size(); ++i) {
    std::vector<BitMessage> messages;
    for (int d = 0; d < cfg.decoders; ++d) messages.push_back(random_message(rng.next(), static_cast<std::size_t>(cfg.bits)));
    const ImageBuffer stego = from_tensor(encode(model, to_tensor(covers[i]), messages));
    const ImageTensor received = to_tensor(stego);
    const BitMessage normal = harden(decode(model, 0, received));
    const BitMessage coerced = harden(decode(model, 1, received));
    err_real += bit_error(normal, messages[0]);
    err_fake += bit_error(coerced, messages[1]);
    quality += psnr(covers[i], stego);
    if (normal != coerced) ++disagreements;
    if (i == 0) {
      t.say("sender", "real message  " + to_hex(messages[0]));
      t.say("sender", "fake message  " + to_hex(messages[1]));
      t.say("channel", "stego image transmitted (8-bit PNG precision)");
      t.say("receiver", "decoder real  " + to_hex(normal));
      t.say("adversary", "coerces the receiver, who surrenders the fake decoder");
      t.say("adversary", "decoder fake  " + to_hex(coerced));
    }
  }
  const double n = static_cast<double>(covers.size());
  err_real /= n;
  err_fake /= n;
  t.say("summary", std::to_string(covers.size()) + " covers, mean PSNR " + fixed(quality / n, 2) + " dB");
  t.check("receiver", "mean real bit error " + fixed(err_real, 4) + " < " + fixed(max_bit_error, 4),
          err_real < max_bit_error);
  t.check("adversary", "mean fake bit error " + fixed(err_fake, 4) + " < " + fixed(max_bit_error, 4),
          err_fake < max_bit_error);
  t.check("summary", "extractors disagree on " + std::to_string(disagreements) + "/" + std::to_string(covers.size()) +
                         " stegos", disagreements > 0);
  t.finish();
  return report;
}

}  // namespace dsteg
