#pragma once

// Reverse-mode differentiation over dense tensors. A Tape records every
// operation result together with a closure that pushes the result's gradient
// back to its inputs. Tapes are single-session objects: build one per
// forward/backward pass and discard it afterwards.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "dsteg/bitmsg.hpp"
#include "dsteg/error.hpp"
#include "dsteg/tensor.hpp"

namespace dsteg::ad {

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Tensor<Scalar>& grad() const { return tape_->grad(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor<Scalar>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value) { return push(std::move(value), false, {}); }
  Var<Scalar> variable(Tensor<Scalar> value) { return push(std::move(value), true, {}); }

  /// Record an operation result. The closure is kept only if some input
  /// requires a gradient; values must be finite.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || requires_grad(v.id());
    return record(std::move(value), needs, std::move(backward));
  }
  Var<Scalar> record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || requires_grad(v.id());
    return record(std::move(value), needs, std::move(backward));
  }

  const Tensor<Scalar>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of `id` after backward(); zeros if nothing reached it.
  const Tensor<Scalar>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor<Scalar>(n.value.shape());
    return n.grad;
  }

  /// Gradient accumulator for an input, or nullptr when it needs none.
  Tensor<Scalar>* grad_sink(const Var<Scalar>& v) {
    Node& n = nodes_.at(v.id());
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<Scalar>(n.value.shape());
    return &n.grad;
  }

  /// Seed d(root)/d(root) = 1 and propagate to every recorded node.
  void backward(const Var<Scalar>& root) {
    Node& r = nodes_.at(root.id());
    if (r.value.size() != 1) fail(ErrorKind::ShapeMismatch, "backward() needs a scalar root");
    r.grad = Tensor<Scalar>::constant(r.value.shape(), Scalar(1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<Scalar> record(Tensor<Scalar> value, bool needs, BackwardFn backward) {
    if (!value.all_finite()) fail(ErrorKind::NonFinite, "operation produced a non-finite value");
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), requires_grad});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.tape() != &b.tape()) fail(ErrorKind::InvalidArgument, "variables live on different tapes");
}

template <typename Scalar>
void require_rank(const Var<Scalar>& v, Index rank, const char* what) {
  if (v.value().rank() != rank)
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                       shape_string(v.shape()));
}

struct ConvGeometry {
  Index in_channels, height, width;
  Index kh, kw, stride, pad;
  Index out_h, out_w;
  Index rows() const { return in_channels * kh * kw; }
  Index cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) whose input column ox*stride - pad + k is in range.
inline void valid_range(Index k, Index stride, Index pad, Index extent, Index out, Index& lo, Index& hi) {
  // smallest ox with ox*stride >= pad - k, largest with ox*stride <= extent - 1 + pad - k
  const Index first = pad - k;
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const Index last = extent - 1 + pad - k;
  hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  if (hi < lo) hi = lo;
}

// cols(r, o) = x[c, oy*stride - pad + ky, ox*stride - pad + kx] with
// r = (c*kh + ky)*kw + kx and o = oy*out_w + ox; zero outside the image.
template <typename Scalar, typename Matrix>
void im2col(const Scalar* x, const ConvGeometry& g, Matrix& cols) {
  for (Index c = 0; c < g.in_channels; ++c)
    for (Index ky = 0; ky < g.kh; ++ky)
      for (Index kx = 0; kx < g.kw; ++kx) {
        Scalar* row = cols.row((c * g.kh + ky) * g.kw + kx).data();
        const Scalar* plane = x + c * g.height * g.width;
        Index lo, hi;
        valid_range(kx, g.stride, g.pad, g.width, g.out_w, lo, hi);
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          Scalar* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * g.width;
          const Index shift = kx - g.pad;
          std::fill(dst, dst + lo, Scalar(0));
          if (g.stride == 1) {
            std::copy(src + lo + shift, src + hi + shift, dst + lo);
          } else {
            for (Index ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + shift];
          }
          std::fill(dst + hi, dst + g.out_w, Scalar(0));
        }
      }
}

template <typename Scalar, typename Matrix>
void col2im_add(const Matrix& cols, const ConvGeometry& g, Scalar* dx) {
  for (Index c = 0; c < g.in_channels; ++c)
    for (Index ky = 0; ky < g.kh; ++ky)
      for (Index kx = 0; kx < g.kw; ++kx) {
        const Scalar* row = cols.row((c * g.kh + ky) * g.kw + kx).data();
        Scalar* plane = dx + c * g.height * g.width;
        Index lo, hi;
        valid_range(kx, g.stride, g.pad, g.width, g.out_w, lo, hi);
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const Scalar* src = row + oy * g.out_w;
          Scalar* dst = plane + iy * g.width;
          const Index shift = kx - g.pad;
          if (g.stride == 1) {
            for (Index ox = lo; ox < hi; ++ox) dst[ox + shift] += src[ox];
          } else {
            for (Index ox = lo; ox < hi; ++ox) dst[ox * g.stride + shift] += src[ox];
          }
        }
      }
}

}  // namespace detail

/// 2-d cross-correlation with zero padding.
/// x: [B, Cin, H, W], kernel: [Cout, Cin, kh, kw], bias: [Cout].
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& kernel, const Var<Scalar>& bias, Index stride = 1,
                   Index pad = 1) {
  detail::require_same_tape(x, kernel);
  detail::require_same_tape(x, bias);
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(kernel, 4, "conv2d kernel");
  detail::require_rank(bias, 1, "conv2d bias");
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& kv = kernel.value();
  const Index batch = xv.dim(0);
  const Index out_c = kv.dim(0);
  if (kv.dim(1) != xv.dim(1) || bias.value().dim(0) != out_c)
    fail(ErrorKind::ShapeMismatch, "conv2d: input " + shape_string(xv.shape()) + " vs kernel " +
                                       shape_string(kv.shape()));
  if (kv.dim(2) % 2 == 0 || kv.dim(3) % 2 == 0) fail(ErrorKind::InvalidArgument, "conv2d kernel sizes must be odd");
  if (stride < 1 || pad < 0) fail(ErrorKind::InvalidArgument, "conv2d stride must be >= 1 and pad >= 0");
  detail::ConvGeometry g{xv.dim(1), xv.dim(2), xv.dim(3), kv.dim(2), kv.dim(3), stride, pad, 0, 0};
  const Index span_h = g.height + 2 * pad - g.kh;
  const Index span_w = g.width + 2 * pad - g.kw;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0)
    fail(ErrorKind::ShapeMismatch, "conv2d: output size is not an integer for input " + shape_string(xv.shape()));
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;

  using Matrix = typename Tensor<Scalar>::Matrix;
  const auto K = kv.matrix(out_c, g.rows());
  const auto bvec = bias.value().array().matrix();
  Tensor<Scalar> out({batch, out_c, g.out_h, g.out_w});
  Matrix cols(g.rows(), g.cols());
  const Index in_stride = g.in_channels * g.height * g.width;
  const Index out_stride = out_c * g.cols();
  for (Index b = 0; b < batch; ++b) {
    detail::im2col(xv.data() + b * in_stride, g, cols);
    typename Tensor<Scalar>::MatrixMap y(out.data() + b * out_stride, out_c, g.cols());
    y.noalias() = K * cols;
    y.colwise() += bvec;
  }

  return x.tape().record(std::move(out), {x, kernel, bias},
                         [x, kernel, bias, g, batch, out_c, in_stride, out_stride](Tape<Scalar>& tape,
                                                                                  const Tensor<Scalar>& gy) {
                           Tensor<Scalar>* dx = tape.grad_sink(x);
                           Tensor<Scalar>* dk = tape.grad_sink(kernel);
                           Tensor<Scalar>* db = tape.grad_sink(bias);
                           const auto K = kernel.value().matrix(out_c, g.rows());
                           Matrix cols(g.rows(), g.cols());
                           for (Index b = 0; b < batch; ++b) {
                             typename Tensor<Scalar>::ConstMatrixMap G(gy.data() + b * out_stride, out_c, g.cols());
                             if (dk) {
                               detail::im2col(x.value().data() + b * in_stride, g, cols);
                               dk->matrix(out_c, g.rows()).noalias() += G * cols.transpose();
                             }
                             if (db) db->array().matrix() += G.rowwise().sum();
                             if (dx) {
                               cols.noalias() = K.transpose() * G;
                               detail::col2im_add(cols, g, dx->data() + b * in_stride);
                             }
                           }
                         });
}

enum class Mode { Train, Eval };

/// Per-channel running mean and variance kept alongside a batch-norm layer.
template <typename Scalar>
struct RunningStats {
  Tensor<Scalar> mean;
  Tensor<Scalar> var;

  bool empty() const noexcept { return mean.empty() || var.empty(); }
  static RunningStats identity(Index channels) {
    return {Tensor<Scalar>({channels}), Tensor<Scalar>::constant({channels}, Scalar(1))};
  }
};

struct BatchNormOptions {
  Mode mode = Mode::Train;
  /// In train mode, fold batch statistics into the running stats.
  bool update_running = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// x: [B, C, H, W]; gamma, beta: [C]. `stats` may be null in train mode.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       RunningStats<Scalar>* stats, const BatchNormOptions& opt = {}) {
  detail::require_rank(x, 4, "batch_norm input");
  const Tensor<Scalar>& xv = x.value();
  const Index batch = xv.dim(0), channels = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  if (gamma.value().shape() != Shape{channels} || beta.value().shape() != Shape{channels})
    fail(ErrorKind::ShapeMismatch, "batch_norm: affine parameters must have shape [C]");
  const Index count = batch * plane;
  using Array = typename Tensor<Scalar>::Array;

  Array mean(channels), inv_std(channels);
  if (opt.mode == Mode::Train) {
    if (count < 2) fail(ErrorKind::InvalidArgument, "batch_norm: train mode needs at least two values per channel");
    Array var(channels);
    for (Index c = 0; c < channels; ++c) {
      Scalar s = 0;
      for (Index b = 0; b < batch; ++b) s += xv.array().segment((b * channels + c) * plane, plane).sum();
      const Scalar mu = s / static_cast<Scalar>(count);
      Scalar ss = 0;
      for (Index b = 0; b < batch; ++b) ss += (xv.array().segment((b * channels + c) * plane, plane) - mu).square().sum();
      mean[c] = mu;
      var[c] = ss / static_cast<Scalar>(count);
    }
    inv_std = (var + Scalar(opt.eps)).rsqrt();
    if (stats && opt.update_running) {
      if (stats->empty()) *stats = RunningStats<Scalar>::identity(channels);
      const Scalar m = static_cast<Scalar>(opt.momentum);
      const Scalar unbias = static_cast<Scalar>(static_cast<double>(count) / static_cast<double>(count - 1));
      stats->mean.array() = (Scalar(1) - m) * stats->mean.array() + m * mean;
      stats->var.array() = (Scalar(1) - m) * stats->var.array() + m * var * unbias;
    }
  } else {
    if (!stats || stats->empty()) fail(ErrorKind::InvalidArgument, "batch_norm: eval mode before running statistics exist");
    if (stats->mean.size() != channels) fail(ErrorKind::ShapeMismatch, "batch_norm: running stats channel mismatch");
    mean = stats->mean.array();
    inv_std = (stats->var.array() + Scalar(opt.eps)).rsqrt();
  }

  Tensor<Scalar> xhat(xv.shape());
  Tensor<Scalar> out(xv.shape());
  const auto& g = gamma.value().array();
  const auto& bt = beta.value().array();
  for (Index b = 0; b < batch; ++b)
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * plane;
      xhat.array().segment(off, plane) = (xv.array().segment(off, plane) - mean[c]) * inv_std[c];
      out.array().segment(off, plane) = xhat.array().segment(off, plane) * g[c] + bt[c];
    }

  const bool train = opt.mode == Mode::Train;
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std, batch, channels, plane, count, train](
          Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
        Tensor<Scalar>* dx = tape.grad_sink(x);
        Tensor<Scalar>* dg = tape.grad_sink(gamma);
        Tensor<Scalar>* dbeta = tape.grad_sink(beta);
        const auto& g = gamma.value().array();
        for (Index c = 0; c < channels; ++c) {
          Scalar sum_g = 0, sum_gx = 0;
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * plane;
            sum_g += gy.array().segment(off, plane).sum();
            sum_gx += (gy.array().segment(off, plane) * xhat.array().segment(off, plane)).sum();
          }
          if (dg) (*dg)[c] += sum_gx;
          if (dbeta) (*dbeta)[c] += sum_g;
          if (!dx) continue;
          const Scalar scale = g[c] * inv_std[c];
          if (train) {
            const Scalar mean_g = sum_g / static_cast<Scalar>(count);
            const Scalar mean_gx = sum_gx / static_cast<Scalar>(count);
            for (Index b = 0; b < batch; ++b) {
              const Index off = (b * channels + c) * plane;
              dx->array().segment(off, plane) +=
                  scale * (gy.array().segment(off, plane) - mean_g - xhat.array().segment(off, plane) * mean_gx);
            }
          } else {
            for (Index b = 0; b < batch; ++b) {
              const Index off = (b * channels + c) * plane;
              dx->array().segment(off, plane) += scale * gy.array().segment(off, plane);
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().array().max(Scalar(0)));
  return x.tape().record(std::move(out), {x}, [x](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
    if (auto* dx = tape.grad_sink(x))
      dx->array() += (x.value().array() > Scalar(0)).select(gy.array(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), Scalar(1) / (Scalar(1) + (-x.value().array()).exp()));
  auto y = out.array();
  return x.tape().record(std::move(out), {x}, [x, y = std::move(y)](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
    if (auto* dx = tape.grad_sink(x)) dx->array() += gy.array() * y * (Scalar(1) - y);
  });
}

/// x: [B, Fin], weight: [Fout, Fin], bias: [Fout] -> [B, Fout].
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  detail::require_rank(x, 2, "linear input");
  detail::require_rank(weight, 2, "linear weight");
  const Index batch = x.value().dim(0), fin = x.value().dim(1), fout = weight.value().dim(0);
  if (weight.value().dim(1) != fin || bias.value().shape() != Shape{fout})
    fail(ErrorKind::ShapeMismatch, "linear: input " + shape_string(x.shape()) + " vs weight " +
                                       shape_string(weight.shape()));
  Tensor<Scalar> out({batch, fout});
  out.matrix(batch, fout).noalias() = x.value().matrix(batch, fin) * weight.value().matrix(fout, fin).transpose();
  out.matrix(batch, fout).rowwise() += bias.value().array().matrix().transpose();
  return x.tape().record(std::move(out), {x, weight, bias},
                         [x, weight, bias, batch, fin, fout](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
                           const auto G = gy.matrix(batch, fout);
                           if (auto* dx = tape.grad_sink(x))
                             dx->matrix(batch, fin).noalias() += G * weight.value().matrix(fout, fin);
                           if (auto* dw = tape.grad_sink(weight))
                             dw->matrix(fout, fin).noalias() += G.transpose() * x.value().matrix(batch, fin);
                           if (auto* db = tape.grad_sink(bias)) db->array().matrix() += G.colwise().sum().transpose();
                         });
}

/// Concatenate [B, Ci, H, W] tensors along the channel axis, in argument order.
template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) fail(ErrorKind::InvalidArgument, "concat_channels of nothing");
  const Shape& first = parts.front().shape();
  if (first.size() != 4) fail(ErrorKind::ShapeMismatch, "concat_channels expects [B,C,H,W] tensors");
  Index channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3])
      fail(ErrorKind::ShapeMismatch, "concat_channels: " + shape_string(s) + " does not match " + shape_string(first));
    channels += s[1];
  }
  const Index batch = first[0], plane = first[2] * first[3];
  Tensor<Scalar> out({batch, channels, first[2], first[3]});
  for (Index b = 0; b < batch; ++b) {
    Index offset = 0;
    for (const auto& p : parts) {
      const Index n = p.shape()[1] * plane;
      out.array().segment(b * channels * plane + offset, n) = p.value().array().segment(b * n, n);
      offset += n;
    }
  }
  return parts.front().tape().record(std::move(out), parts,
                                     [parts, batch, channels, plane](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
                                       Index offset = 0;
                                       for (const auto& p : parts) {
                                         const Index n = p.shape()[1] * plane;
                                         if (auto* dp = tape.grad_sink(p))
                                           for (Index b = 0; b < batch; ++b)
                                             dp->array().segment(b * n, n) +=
                                                 gy.array().segment(b * channels * plane + offset, n);
                                         offset += n;
                                       }
                                     });
}

/// Global mean over the spatial axes: [B, C, H, W] -> [B, C].
template <typename Scalar>
Var<Scalar> adaptive_avg_pool(const Var<Scalar>& x) {
  detail::require_rank(x, 4, "adaptive_avg_pool input");
  const Index batch = x.value().dim(0), channels = x.value().dim(1), plane = x.value().dim(2) * x.value().dim(3);
  if (plane < 1) fail(ErrorKind::ShapeMismatch, "adaptive_avg_pool on an empty plane");
  Tensor<Scalar> out({batch, channels});
  out.matrix(batch * channels, 1) = x.value().matrix(batch * channels, plane).rowwise().mean();
  return x.tape().record(std::move(out), {x}, [x, batch, channels, plane](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
    if (auto* dx = tape.grad_sink(x))
      dx->matrix(batch * channels, plane).colwise() +=
          gy.matrix(batch * channels, 1).col(0) / static_cast<Scalar>(plane);
  });
}

/// Mean squared difference over all elements; returns a [1] tensor.
template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape())
    fail(ErrorKind::ShapeMismatch, "mse: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const Index n = a.value().size();
  const double sum = (a.value().array() - b.value().array()).template cast<double>().square().sum();
  return a.tape().record(Tensor<Scalar>::scalar(static_cast<Scalar>(sum / static_cast<double>(n))), {a, b},
                         [a, b, n](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
                           const Scalar k = Scalar(2) * gy[0] / static_cast<Scalar>(n);
                           if (auto* da = tape.grad_sink(a)) da->array() += k * (a.value().array() - b.value().array());
                           if (auto* db = tape.grad_sink(b)) db->array() -= k * (a.value().array() - b.value().array());
                         });
}

inline constexpr double kLogClamp = 1e-6;

/// Mean binary cross-entropy of probabilities `p` against constant labels.
/// Probabilities are clamped to [kLogClamp, 1 - kLogClamp]; the clamp is flat
/// so clamped entries receive no gradient.
template <typename Scalar>
Var<Scalar> bce(const Var<Scalar>& p, const Tensor<Scalar>& labels) {
  if (p.value().size() != labels.size())
    fail(ErrorKind::ShapeMismatch, "bce: " + shape_string(p.shape()) + " vs labels " + shape_string(labels.shape()));
  const Index n = labels.size();
  const double lo = kLogClamp, hi = 1.0 - kLogClamp;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double pc = std::clamp(static_cast<double>(p.value()[i]), lo, hi);
    const double y = static_cast<double>(labels[i]);
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  return p.tape().record(Tensor<Scalar>::scalar(static_cast<Scalar>(total / static_cast<double>(n))), {p},
                         [p, labels, n, lo, hi](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
                           auto* dp = tape.grad_sink(p);
                           if (!dp) return;
                           for (Index i = 0; i < n; ++i) {
                             const double v = static_cast<double>(p.value()[i]);
                             if (v < lo || v > hi) continue;
                             const double y = static_cast<double>(labels[i]);
                             (*dp)[i] += static_cast<Scalar>(static_cast<double>(gy[0]) * (v - y) /
                                                             (v * (1.0 - v)) / static_cast<double>(n));
                           }
                         });
}

/// |a - b| for scalars, with subgradient 0 where a == b.
template <typename Scalar>
Var<Scalar> abs_diff(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape(a, b);
  const Scalar d = a.value().item() - b.value().item();
  const Scalar sign = d > 0 ? Scalar(1) : (d < 0 ? Scalar(-1) : Scalar(0));
  return a.tape().record(Tensor<Scalar>::scalar(std::abs(d)), {a, b},
                         [a, b, sign](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
                           if (auto* da = tape.grad_sink(a)) (*da)[0] += sign * gy[0];
                           if (auto* db = tape.grad_sink(b)) (*db)[0] -= sign * gy[0];
                         });
}

/// sum_i weights[i] * terms[i]; all terms share one shape.
template <typename Scalar>
Var<Scalar> weighted_sum(const std::vector<Var<Scalar>>& terms, const std::vector<Scalar>& weights) {
  if (terms.empty() || terms.size() != weights.size())
    fail(ErrorKind::LengthMismatch, "weighted_sum needs one weight per term");
  Tensor<Scalar> out(terms.front().shape());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].shape() != out.shape()) fail(ErrorKind::ShapeMismatch, "weighted_sum terms differ in shape");
    out.array() += weights[i] * terms[i].value().array();
  }
  return terms.front().tape().record(std::move(out), terms,
                                     [terms, weights](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
                                       for (std::size_t i = 0; i < terms.size(); ++i)
                                         if (auto* d = tape.grad_sink(terms[i])) d->array() += weights[i] * gy.array();
                                     });
}

template <typename Scalar>
Var<Scalar> sum(const std::vector<Var<Scalar>>& terms) {
  return weighted_sum(terms, std::vector<Scalar>(terms.size(), Scalar(1)));
}

/// <x, w> for a constant w of the same size; returns a [1] tensor.
template <typename Scalar>
Var<Scalar> dot(const Var<Scalar>& x, const Tensor<Scalar>& w) {
  if (x.value().size() != w.size()) fail(ErrorKind::ShapeMismatch, "dot: size mismatch");
  const double v = (x.value().array().template cast<double>() * w.array().template cast<double>()).sum();
  return x.tape().record(Tensor<Scalar>::scalar(static_cast<Scalar>(v)), {x},
                         [x, w](Tape<Scalar>& tape, const Tensor<Scalar>& gy) {
                           if (auto* dx = tape.grad_sink(x)) dx->array() += gy[0] * w.array();
                         });
}

/// Each bit becomes a constant h x w plane: [t, h, w].
template <typename Scalar>
Tensor<Scalar> replicate_bits(const BitMessage& m, Index h, Index w) {
  Tensor<Scalar> out({static_cast<Index>(m.size()), h, w});
  for (std::size_t i = 0; i < m.size(); ++i)
    out.array().segment(static_cast<Index>(i) * h * w, h * w).setConstant(static_cast<Scalar>(m[i]));
  return out;
}

/// Message planes for a batch: messages[b] lists sample b's messages in
/// decoder order; the result is [B, sum of lengths, h, w].
template <typename Scalar>
Tensor<Scalar> replicate_bits(const std::vector<std::vector<BitMessage>>& messages, Index h, Index w) {
  if (messages.empty()) fail(ErrorKind::InvalidArgument, "replicate_bits of an empty batch");
  Index per_sample = 0;
  for (const auto& m : messages.front()) per_sample += static_cast<Index>(m.size());
  Tensor<Scalar> out({static_cast<Index>(messages.size()), per_sample, h, w});
  for (std::size_t b = 0; b < messages.size(); ++b) {
    Index offset = static_cast<Index>(b) * per_sample * h * w;
    for (const auto& m : messages[b]) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (offset >= static_cast<Index>(b + 1) * per_sample * h * w)
          fail(ErrorKind::LengthMismatch, "replicate_bits: samples carry different bit counts");
        out.array().segment(offset, h * w).setConstant(static_cast<Scalar>(m[i]));
        offset += h * w;
      }
    }
    if (offset != static_cast<Index>(b + 1) * per_sample * h * w)
      fail(ErrorKind::LengthMismatch, "replicate_bits: samples carry different bit counts");
  }
  return out;
}

}  // namespace dsteg::ad
