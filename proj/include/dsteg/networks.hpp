#pragma once

// Encoder, decoders and adversary. All convolutions are 3x3, stride 1,
// padding 1; hidden layers use 64 filters.
//
//   encoder:   cover -> 4 x ConvBnRelu(64) -> concat[features, cover, message planes]
//              -> ConvBnRelu(64) -> Conv(3) = stego
//   decoder i: stego -> 7 x ConvBnRelu(64) -> ConvBnRelu(t) -> avg pool -> Linear(t,t) -> sigmoid
//   adversary: image -> 3 x ConvBnRelu(64) -> avg pool -> Linear(64,1) -> sigmoid

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsteg/autodiff.hpp"
#include "dsteg/bitmsg.hpp"
#include "dsteg/imaging.hpp"
#include "dsteg/losses.hpp"

namespace dsteg {

inline constexpr Index kHiddenChannels = 64;
inline constexpr Index kEncoderFeatureBlocks = 4;
inline constexpr Index kDecoderBlocks = 8;
inline constexpr Index kAdversaryBlocks = 3;

struct ModelConfig {
  int decoders = 2;
  int bits = 30;
  Size2 image{32, 32};
  LossWeights weights;

  void validate() const {
    if (decoders < 2) fail(ErrorKind::InvalidArgument, "need at least two decoders");
    if (bits < 1) fail(ErrorKind::InvalidArgument, "messages need at least one bit");
    if (image.height < 1 || image.width < 1) fail(ErrorKind::InvalidArgument, "image size must be positive");
    weights.validate();
  }
  /// Channels entering the encoder's fusion block.
  Index fused_channels() const { return kHiddenChannels + 3 + static_cast<Index>(decoders) * bits; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Scalar>
struct ConvLayer {
  Tensor<Scalar> weight;  // [out, in, 3, 3]
  Tensor<Scalar> bias;    // [out]
};

template <typename Scalar>
struct ConvBnRelu {
  ConvLayer<Scalar> conv;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  ad::RunningStats<Scalar> stats;
};

template <typename Scalar>
struct LinearLayer {
  Tensor<Scalar> weight;  // [out, in]
  Tensor<Scalar> bias;    // [out]
};

template <typename Scalar>
struct EncoderParams {
  std::vector<ConvBnRelu<Scalar>> features;
  ConvBnRelu<Scalar> fuse;
  ConvLayer<Scalar> output;
};

template <typename Scalar>
struct DecoderParams {
  std::vector<ConvBnRelu<Scalar>> blocks;
  LinearLayer<Scalar> head;
};

template <typename Scalar>
struct AdversaryParams {
  std::vector<ConvBnRelu<Scalar>> blocks;
  LinearLayer<Scalar> head;
};

enum class ParamGroup { Encoder, Decoder, Adversary };

enum class TensorRole { Trainable, RunningStat };

template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  EncoderParams<Scalar> encoder;
  std::vector<DecoderParams<Scalar>> decoders;
  AdversaryParams<Scalar> adversary;
};

namespace detail {

inline Tensor<float> kaiming_normal(const Shape& shape, Index fan_in, double gain, SplitMix64& rng) {
  Tensor<float> t(shape);
  const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
  for (Index i = 0; i < t.size(); i += 2) {
    // Box-Muller; both outputs are used.
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    t[i] = static_cast<float>(stddev * r * std::cos(2.0 * M_PI * u2));
    if (i + 1 < t.size()) t[i + 1] = static_cast<float>(stddev * r * std::sin(2.0 * M_PI * u2));
  }
  return t;
}

inline ConvLayer<float> make_conv(Index in, Index out, double gain, SplitMix64& rng) {
  return {kaiming_normal({out, in, 3, 3}, in * 9, gain, rng), Tensor<float>({out})};
}

inline ConvBnRelu<float> make_block(Index in, Index out, SplitMix64& rng) {
  return {make_conv(in, out, 2.0, rng), Tensor<float>::constant({out}, 1.0f), Tensor<float>({out}),
          ad::RunningStats<float>::identity(out)};
}

inline LinearLayer<float> make_linear(Index in, Index out, SplitMix64& rng) {
  return {kaiming_normal({out, in}, in, 1.0, rng), Tensor<float>({out})};
}

template <typename To, typename From>
ConvBnRelu<To> cast_block(const ConvBnRelu<From>& b) {
  return {{b.conv.weight.template cast<To>(), b.conv.bias.template cast<To>()},
          b.gamma.template cast<To>(),
          b.beta.template cast<To>(),
          {b.stats.mean.template cast<To>(), b.stats.var.template cast<To>()}};
}

template <typename To, typename From>
LinearLayer<To> cast_linear(const LinearLayer<From>& l) {
  return {l.weight.template cast<To>(), l.bias.template cast<To>()};
}

}  // namespace detail

/// Fresh model: Kaiming fan-in normal weights (gain 2 before ReLU, 1 for the
/// output conv and linear heads), zero biases, gamma 1, beta 0, running
/// statistics mean 0 / variance 1.
inline ModelParams<float> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SplitMix64 rng(seed);
  ModelParams<float> m;
  m.config = config;
  const Index t = config.bits;
  for (Index i = 0; i < kEncoderFeatureBlocks; ++i)
    m.encoder.features.push_back(detail::make_block(i == 0 ? 3 : kHiddenChannels, kHiddenChannels, rng));
  m.encoder.fuse = detail::make_block(config.fused_channels(), kHiddenChannels, rng);
  m.encoder.output = detail::make_conv(kHiddenChannels, 3, 1.0, rng);
  for (int d = 0; d < config.decoders; ++d) {
    DecoderParams<float> dec;
    for (Index i = 0; i < kDecoderBlocks; ++i)
      dec.blocks.push_back(detail::make_block(i == 0 ? 3 : kHiddenChannels,
                                              i + 1 == kDecoderBlocks ? t : kHiddenChannels, rng));
    dec.head = detail::make_linear(t, t, rng);
    m.decoders.push_back(std::move(dec));
  }
  for (Index i = 0; i < kAdversaryBlocks; ++i)
    m.adversary.blocks.push_back(detail::make_block(i == 0 ? 3 : kHiddenChannels, kHiddenChannels, rng));
  m.adversary.head = detail::make_linear(kHiddenChannels, 1, rng);
  return m;
}

template <typename To, typename From>
ModelParams<To> cast_model(const ModelParams<From>& m) {
  ModelParams<To> out;
  out.config = m.config;
  for (const auto& b : m.encoder.features) out.encoder.features.push_back(detail::cast_block<To>(b));
  out.encoder.fuse = detail::cast_block<To>(m.encoder.fuse);
  out.encoder.output = {m.encoder.output.weight.template cast<To>(), m.encoder.output.bias.template cast<To>()};
  for (const auto& d : m.decoders) {
    DecoderParams<To> dec;
    for (const auto& b : d.blocks) dec.blocks.push_back(detail::cast_block<To>(b));
    dec.head = detail::cast_linear<To>(d.head);
    out.decoders.push_back(std::move(dec));
  }
  for (const auto& b : m.adversary.blocks) out.adversary.blocks.push_back(detail::cast_block<To>(b));
  out.adversary.head = detail::cast_linear<To>(m.adversary.head);
  return out;
}

/// Calls fn(name, tensor, group, role) for every tensor in a fixed order.
/// The order and names define the model file layout.
template <typename Model, typename Fn>
void for_each_tensor(Model& m, Fn&& fn) {
  auto block = [&](const std::string& prefix, auto& b, ParamGroup g) {
    fn(prefix + ".conv.weight", b.conv.weight, g, TensorRole::Trainable);
    fn(prefix + ".conv.bias", b.conv.bias, g, TensorRole::Trainable);
    fn(prefix + ".bn.gamma", b.gamma, g, TensorRole::Trainable);
    fn(prefix + ".bn.beta", b.beta, g, TensorRole::Trainable);
    fn(prefix + ".bn.running_mean", b.stats.mean, g, TensorRole::RunningStat);
    fn(prefix + ".bn.running_var", b.stats.var, g, TensorRole::RunningStat);
  };
  for (std::size_t i = 0; i < m.encoder.features.size(); ++i)
    block("encoder.features." + std::to_string(i), m.encoder.features[i], ParamGroup::Encoder);
  block("encoder.fuse", m.encoder.fuse, ParamGroup::Encoder);
  fn("encoder.output.weight", m.encoder.output.weight, ParamGroup::Encoder, TensorRole::Trainable);
  fn("encoder.output.bias", m.encoder.output.bias, ParamGroup::Encoder, TensorRole::Trainable);
  for (std::size_t d = 0; d < m.decoders.size(); ++d) {
    const std::string prefix = "decoder." + std::to_string(d);
    for (std::size_t i = 0; i < m.decoders[d].blocks.size(); ++i)
      block(prefix + ".blocks." + std::to_string(i), m.decoders[d].blocks[i], ParamGroup::Decoder);
    fn(prefix + ".head.weight", m.decoders[d].head.weight, ParamGroup::Decoder, TensorRole::Trainable);
    fn(prefix + ".head.bias", m.decoders[d].head.bias, ParamGroup::Decoder, TensorRole::Trainable);
  }
  for (std::size_t i = 0; i < m.adversary.blocks.size(); ++i)
    block("adversary.blocks." + std::to_string(i), m.adversary.blocks[i], ParamGroup::Adversary);
  fn("adversary.head.weight", m.adversary.head.weight, ParamGroup::Adversary, TensorRole::Trainable);
  fn("adversary.head.bias", m.adversary.head.bias, ParamGroup::Adversary, TensorRole::Trainable);
}

/// Trainable tensors of the given groups, in for_each_tensor order.
template <typename Scalar>
std::vector<Tensor<Scalar>*> trainable_tensors(ModelParams<Scalar>& m, std::initializer_list<ParamGroup> groups) {
  std::vector<Tensor<Scalar>*> out;
  for_each_tensor(m, [&](const std::string&, Tensor<Scalar>& t, ParamGroup g, TensorRole role) {
    if (role != TensorRole::Trainable) return;
    for (ParamGroup want : groups)
      if (g == want) out.push_back(&t);
  });
  return out;
}

/// Places model tensors on a tape: as variables for the groups being
/// trained, as constants otherwise. Gradients are read back per tensor.
template <typename Scalar>
class ParamBinder {
 public:
  ParamBinder(ad::Tape<Scalar>& tape, std::initializer_list<ParamGroup> trained) : tape_(tape), trained_(trained) {}

  ad::Tape<Scalar>& tape() { return tape_; }

  ad::Var<Scalar> bind(const Tensor<Scalar>& t, ParamGroup group) {
    auto it = bound_.find(&t);
    if (it != bound_.end()) return it->second;
    bool train = false;
    for (ParamGroup g : trained_) train = train || g == group;
    const ad::Var<Scalar> v = train ? tape_.variable(t) : tape_.constant(t);
    bound_.emplace(&t, v);
    return v;
  }

  /// Gradients aligned with `params`; zero for tensors never bound.
  std::vector<Tensor<Scalar>> gradients(const std::vector<Tensor<Scalar>*>& params) {
    std::vector<Tensor<Scalar>> out;
    out.reserve(params.size());
    for (auto* p : params) {
      auto it = bound_.find(p);
      out.push_back(it == bound_.end() ? Tensor<Scalar>(p->shape()) : tape_.grad(it->second.id()));
    }
    return out;
  }

 private:
  ad::Tape<Scalar>& tape_;
  std::vector<ParamGroup> trained_;
  std::unordered_map<const Tensor<Scalar>*, ad::Var<Scalar>> bound_;
};

struct ForwardOptions {
  ad::Mode mode = ad::Mode::Eval;
  /// Train mode only: fold batch statistics into the running statistics.
  bool update_running = false;
};

template <typename Scalar>
ad::Var<Scalar> conv_bn_relu(ParamBinder<Scalar>& binder, ConvBnRelu<Scalar>& block, ParamGroup group,
                             const ad::Var<Scalar>& x, const ForwardOptions& opt) {
  const auto y = ad::conv2d(x, binder.bind(block.conv.weight, group), binder.bind(block.conv.bias, group), 1, 1);
  const auto n = ad::batch_norm(y, binder.bind(block.gamma, group), binder.bind(block.beta, group), &block.stats,
                                ad::BatchNormOptions{opt.mode, opt.update_running});
  return ad::relu(n);
}

/// cover: [B,3,H,W]; message_planes: [B, N*t, H, W] from replicate_bits.
template <typename Scalar>
ad::Var<Scalar> encoder_forward(ParamBinder<Scalar>& binder, ModelParams<Scalar>& m, const ad::Var<Scalar>& cover,
                                const Tensor<Scalar>& message_planes, const ForwardOptions& opt) {
  const auto& cs = cover.shape();
  if (cs.size() != 4 || cs[1] != 3) fail(ErrorKind::ShapeMismatch, "encoder expects [B,3,H,W] covers");
  const Index expected = static_cast<Index>(m.config.decoders) * m.config.bits;
  if (message_planes.rank() != 4 || message_planes.dim(0) != cs[0] || message_planes.dim(1) != expected ||
      message_planes.dim(2) != cs[2] || message_planes.dim(3) != cs[3])
    fail(ErrorKind::ShapeMismatch, "encoder: message planes " + shape_string(message_planes.shape()) +
                                       " do not match cover " + shape_string(cs));
  auto h = cover;
  for (auto& block : m.encoder.features) h = conv_bn_relu(binder, block, ParamGroup::Encoder, h, opt);
  const auto planes = binder.tape().constant(message_planes);
  h = ad::concat_channels<Scalar>({h, cover, planes});
  h = conv_bn_relu(binder, m.encoder.fuse, ParamGroup::Encoder, h, opt);
  return ad::conv2d(h, binder.bind(m.encoder.output.weight, ParamGroup::Encoder),
                    binder.bind(m.encoder.output.bias, ParamGroup::Encoder), 1, 1);
}

/// stego: [B,3,H,W] of any spatial size -> soft bits [B, t].
template <typename Scalar>
ad::Var<Scalar> decoder_forward(ParamBinder<Scalar>& binder, ModelParams<Scalar>& m, std::size_t which,
                                const ad::Var<Scalar>& stego, const ForwardOptions& opt) {
  if (which >= m.decoders.size())
    fail(ErrorKind::InvalidArgument, "decoder index " + std::to_string(which) + " out of range");
  auto& dec = m.decoders[which];
  auto h = stego;
  for (auto& block : dec.blocks) h = conv_bn_relu(binder, block, ParamGroup::Decoder, h, opt);
  h = ad::adaptive_avg_pool(h);
  h = ad::linear(h, binder.bind(dec.head.weight, ParamGroup::Decoder), binder.bind(dec.head.bias, ParamGroup::Decoder));
  return ad::sigmoid(h);
}

/// image: [B,3,H,W] -> probability of "stego", [B, 1].
template <typename Scalar>
ad::Var<Scalar> adversary_forward(ParamBinder<Scalar>& binder, ModelParams<Scalar>& m, const ad::Var<Scalar>& image,
                                  const ForwardOptions& opt) {
  if (image.shape().size() != 4 || image.shape()[1] != 3)
    fail(ErrorKind::ShapeMismatch, "adversary expects [B,3,H,W] images, got " + shape_string(image.shape()));
  auto h = image;
  for (auto& block : m.adversary.blocks) h = conv_bn_relu(binder, block, ParamGroup::Adversary, h, opt);
  h = ad::adaptive_avg_pool(h);
  h = ad::linear(h, binder.bind(m.adversary.head.weight, ParamGroup::Adversary),
                 binder.bind(m.adversary.head.bias, ParamGroup::Adversary));
  return ad::sigmoid(h);
}

/// Decoder outputs before thresholding, each in (0, 1).
using SoftBits = std::vector<double>;

/// Threshold at 0.5 (values >= 0.5 become 1).
BitMessage harden(const SoftBits& soft);

// Single-image inference in eval mode. The model is only read.

ImageTensor encode(const ModelParams<float>& m, const ImageTensor& cover, const std::vector<BitMessage>& messages);
SoftBits decode(const ModelParams<float>& m, std::size_t which, const ImageTensor& stego);
double discriminate(const ModelParams<float>& m, const ImageTensor& image);

/// Check that `messages` has one message of the configured length per decoder.
void validate_messages(const ModelConfig& config, const std::vector<BitMessage>& messages);

}  // namespace dsteg
