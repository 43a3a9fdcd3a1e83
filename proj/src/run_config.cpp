#include "dsteg/run_config.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

namespace dsteg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  fail(ErrorKind::Format, "invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  std::from_chars_result r;
  if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (value.starts_with("0x") || value.starts_with("0X"))
      r = std::from_chars(first + 2, last, out, 16);
    else
      r = std::from_chars(first, last, out, 10);
  } else {
    r = std::from_chars(first, last, out);
  }
  if (value.empty() || r.ec != std::errc{} || r.ptr != last) bad_value(key, value);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename Member>
Field int_field(const char* key, Member member) {
  return {key, [=](TrainConfig& c, std::string_view v) { std::invoke(member, c) = parse_number<int>(key, v); },
          [=](const TrainConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

template <typename Member>
Field double_field(const char* key, Member member) {
  return {key, [=](TrainConfig& c, std::string_view v) { std::invoke(member, c) = parse_number<double>(key, v); },
          [=](const TrainConfig& c) { return format_double(std::invoke(member, c)); }};
}

Field size_field(const char* key, Index Size2::*member) {
  return {key,
          [=](TrainConfig& c, std::string_view v) { c.model.image.*member = parse_number<Index>(key, v); },
          [=](const TrainConfig& c) { return std::to_string(c.model.image.*member); }};
}

Field text_field(const char* key, std::string TrainConfig::*member) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*member = std::string(v); },
          [=](const TrainConfig& c) {
            const std::string& v = c.*member;
            if (v.find_first_of("#\n\r") != std::string::npos || trim(v) != v)
              fail(ErrorKind::InvalidArgument, std::string(key) + " cannot be written as a config line: '" + v + "'");
            return v;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      int_field("decoders", [](auto& c) -> auto& { return c.model.decoders; }),
      int_field("bits", [](auto& c) -> auto& { return c.model.bits; }),
      size_field("height", &Size2::height),
      size_field("width", &Size2::width),
      int_field("epochs", [](auto& c) -> auto& { return c.epochs; }),
      int_field("batch", [](auto& c) -> auto& { return c.batch; }),
      {"seed", [](TrainConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      int_field("checkpoint_interval", [](auto& c) -> auto& { return c.checkpoint_interval; }),
      double_field("lambda_image", [](auto& c) -> auto& { return c.model.weights.image; }),
      double_field("lambda_message", [](auto& c) -> auto& { return c.model.weights.message; }),
      double_field("lambda_adversarial", [](auto& c) -> auto& { return c.model.weights.adversarial; }),
      double_field("lambda_decoder", [](auto& c) -> auto& { return c.model.weights.decoder; }),
      double_field("lambda_balance", [](auto& c) -> auto& { return c.model.weights.balance; }),
      double_field("lr", [](auto& c) -> auto& { return c.adam.lr; }),
      double_field("beta1", [](auto& c) -> auto& { return c.adam.beta1; }),
      double_field("beta2", [](auto& c) -> auto& { return c.adam.beta2; }),
      double_field("adam_eps", [](auto& c) -> auto& { return c.adam.eps; }),
      text_field("train_dir", &TrainConfig::train_dir),
      text_field("val_dir", &TrainConfig::val_dir),
  };
  return all;
}

}  // namespace

TrainConfig parse_run_config(std::string_view text) {
  TrainConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (key == f.key) field = &f;
    if (!field) fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    if (!seen.emplace(key).second)
      fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": repeated key '" + std::string(key) + "'");
    field->set(config, value);
  }
  return config;
}

std::string render_run_config(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.get(config) << '\n';
  return out.str();
}

}  // namespace dsteg
