#include "dsteg/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace dsteg {

namespace {

class ByteWriter {
 public:
  void raw(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (n > remaining()) fail(ErrorKind::Format, std::string("truncated model file while reading ") + what);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    const auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void write_tensor(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.shape()) w.u64(static_cast<std::uint64_t>(d));
  for (Index i = 0; i < t.size(); ++i) w.f32(t[i]);
}

Tensor<float> read_tensor_body(ByteReader& r) {
  const std::uint32_t rank = r.u32("tensor rank");
  if (rank > 8) fail(ErrorKind::Format, "tensor rank " + std::to_string(rank) + " is out of range");
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t d = r.u64("tensor dims");
    if (d > static_cast<std::uint64_t>(std::numeric_limits<Index>::max()) ||
        (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d))
      fail(ErrorKind::Format, "tensor dimension overflow");
    count *= d;
    shape.push_back(static_cast<Index>(d));
  }
  if (count * 4 > r.remaining()) fail(ErrorKind::Format, "truncated model file while reading tensor values");
  Tensor<float> t(shape);
  const auto raw = r.take(static_cast<std::size_t>(count) * 4, "tensor values");
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<std::uint8_t>(raw[4 * i + static_cast<std::size_t>(b)]);
    t[static_cast<Index>(i)] = std::bit_cast<float>(bits);
  }
  return t;
}

std::uint32_t checked_u32(int v, const char* what) {
  if (v < 0) fail(ErrorKind::InvalidArgument, std::string(what) + " must be non-negative");
  return static_cast<std::uint32_t>(v);
}

bool is_auxiliary(const std::string& name) { return name.starts_with("optimizer.") || name.starts_with("trainer."); }

// Integers are stored as four 16-bit chunks so every value is exact in f32.
Tensor<float> pack_u64(std::uint64_t v) {
  Tensor<float> t({4});
  for (Index i = 0; i < 4; ++i) t[i] = static_cast<float>((v >> (16 * i)) & 0xFFFFu);
  return t;
}

std::uint64_t unpack_u64(const Tensor<float>& t, const std::string& name) {
  if (t.shape() != Shape{4}) fail(ErrorKind::Format, name + " must hold four chunks");
  std::uint64_t v = 0;
  for (Index i = 3; i >= 0; --i) {
    const float c = t[i];
    if (!(c >= 0.0f && c <= 65535.0f) || c != static_cast<float>(static_cast<std::uint32_t>(c)))
      fail(ErrorKind::Format, name + " holds a malformed integer chunk");
    v = (v << 16) | static_cast<std::uint64_t>(c);
  }
  return v;
}

void append_optimizer(std::vector<NamedTensor>& out, const std::string& prefix, const AdamState<float>& s) {
  out.emplace_back(prefix + ".step", pack_u64(static_cast<std::uint64_t>(s.step)));
  for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
    out.emplace_back(prefix + ".m." + std::to_string(i), s.first_moment[i]);
    out.emplace_back(prefix + ".v." + std::to_string(i), s.second_moment[i]);
  }
}

void restore_optimizer(const std::map<std::string, const Tensor<float>*>& index, const std::string& prefix,
                       const std::vector<Tensor<float>*>& params, AdamState<float>& s) {
  auto find = [&](const std::string& name) -> const Tensor<float>* {
    const auto it = index.find(name);
    return it == index.end() ? nullptr : it->second;
  };
  const auto* step = find(prefix + ".step");
  if (!step) fail(ErrorKind::Format, "checkpoint lacks " + prefix + ".step");
  s.step = static_cast<std::int64_t>(unpack_u64(*step, prefix + ".step"));
  s.first_moment.clear();
  s.second_moment.clear();
  if (s.step == 0) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = find(prefix + ".m." + std::to_string(i));
    const auto* v = find(prefix + ".v." + std::to_string(i));
    if (!m || !v) fail(ErrorKind::Format, "checkpoint lacks moments for " + prefix + " parameter " + std::to_string(i));
    if (m->shape() != params[i]->shape() || v->shape() != params[i]->shape())
      fail(ErrorKind::Format, "checkpoint moment shape mismatch in " + prefix);
    s.first_moment.push_back(*m);
    s.second_moment.push_back(*v);
  }
}

}  // namespace

std::string serialize_model(const ModelParams<float>& model, const std::vector<NamedTensor>& extra) {
  const auto& c = model.config;
  ByteWriter w;
  w.raw(std::string_view(kModelMagic, 4));
  w.u32(kModelFormatVersion);
  w.u32(checked_u32(c.decoders, "decoders"));
  w.u32(checked_u32(c.bits, "bits"));
  w.u32(checked_u32(static_cast<int>(c.image.height), "height"));
  w.u32(checked_u32(static_cast<int>(c.image.width), "width"));
  for (double v : {c.weights.image, c.weights.message, c.weights.adversarial, c.weights.decoder, c.weights.balance}) w.f64(v);

  std::size_t count = extra.size();
  for_each_tensor(model, [&](const std::string&, const Tensor<float>&, ParamGroup, TensorRole) { ++count; });
  w.u32(static_cast<std::uint32_t>(count));
  for_each_tensor(model, [&](const std::string& name, const Tensor<float>& t, ParamGroup, TensorRole) {
    write_tensor(w, name, t);
  });
  for (const auto& [name, t] : extra) write_tensor(w, name, t);
  return w.take();
}

ModelFile parse_model_file(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    fail(ErrorKind::Format, "bad magic: not a model file");
  r.take(4, "magic");
  const std::uint32_t version = r.u32("format version");
  if (version != kModelFormatVersion)
    fail(ErrorKind::Unsupported, "unsupported model format version " + std::to_string(version));

  ModelFile file;
  auto& c = file.config;
  c.decoders = static_cast<int>(r.u32("decoders"));
  c.bits = static_cast<int>(r.u32("bits"));
  c.image.height = r.u32("height");
  c.image.width = r.u32("width");
  c.weights.image = r.f64("weights");
  c.weights.message = r.f64("weights");
  c.weights.adversarial = r.f64("weights");
  c.weights.decoder = r.f64("weights");
  c.weights.balance = r.f64("weights");

  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("tensor name length");
    std::string name(r.take(len, "tensor name"));
    file.tensors.emplace_back(std::move(name), read_tensor_body(r));
  }
  if (r.remaining() != 0) fail(ErrorKind::Format, "trailing bytes after the last tensor");
  return file;
}

ModelParams<float> model_from_file(const ModelFile& file) {
  try {
    file.config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("model file metadata is invalid: ") + e.what());
  }
  std::map<std::string, const Tensor<float>*> index;
  for (const auto& [name, t] : file.tensors)
    if (!index.emplace(name, &t).second) fail(ErrorKind::Format, "duplicate tensor " + name);

  ModelParams<float> model = init_model(file.config, 0);
  std::set<std::string> known;
  for_each_tensor(model, [&](const std::string& name, Tensor<float>& t, ParamGroup, TensorRole) {
    const auto it = index.find(name);
    if (it == index.end()) fail(ErrorKind::Format, "model file lacks tensor " + name);
    if (it->second->shape() != t.shape())
      fail(ErrorKind::Format, "tensor " + name + " has shape " + shape_string(it->second->shape()) + ", expected " +
                                  shape_string(t.shape()));
    t = *it->second;
    known.insert(name);
  });
  for (const auto& entry : file.tensors)
    if (!is_auxiliary(entry.first) && !known.count(entry.first)) fail(ErrorKind::Format, "unexpected tensor " + entry.first);
  return model;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::Io, "cannot read " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
}

void save_model(const std::filesystem::path& path, const ModelParams<float>& model) {
  write_file(path, serialize_model(model));
}

ModelParams<float> load_model(const std::filesystem::path& path) { return model_from_file(parse_model_file(read_file(path))); }

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer) {
  std::vector<NamedTensor> extra;
  append_optimizer(extra, "optimizer.encoder", trainer.encoder_optimizer());
  append_optimizer(extra, "optimizer.adversary", trainer.adversary_optimizer());
  extra.emplace_back("trainer.epochs_done", pack_u64(static_cast<std::uint64_t>(trainer.epochs_done())));
  extra.emplace_back("trainer.message_stream", pack_u64(trainer.message_stream().state()));
  write_file(path, serialize_model(trainer.model(), extra));
}

Trainer load_checkpoint(const std::filesystem::path& path, const TrainConfig& config) {
  const ModelFile file = parse_model_file(read_file(path));
  Trainer trainer(config, model_from_file(file));
  std::map<std::string, const Tensor<float>*> index;
  for (const auto& [name, t] : file.tensors) index.emplace(name, &t);
  auto& model = trainer.model();
  restore_optimizer(index, "optimizer.encoder", trainable_tensors(model, {ParamGroup::Encoder, ParamGroup::Decoder}),
                    trainer.encoder_optimizer());
  restore_optimizer(index, "optimizer.adversary", trainable_tensors(model, {ParamGroup::Adversary}),
                    trainer.adversary_optimizer());
  for (const char* key : {"trainer.epochs_done", "trainer.message_stream"})
    if (!index.count(key)) fail(ErrorKind::Format, std::string("checkpoint lacks ") + key);
  trainer.set_epochs_done(static_cast<int>(unpack_u64(*index.at("trainer.epochs_done"), "trainer.epochs_done")));
  trainer.message_stream() = SplitMix64(unpack_u64(*index.at("trainer.message_stream"), "trainer.message_stream"));
  return trainer;
}

}  // namespace dsteg
