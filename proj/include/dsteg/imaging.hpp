#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "dsteg/tensor.hpp"

namespace dsteg {

struct Size2 {
  Index height = 0;
  Index width = 0;
  friend bool operator==(const Size2&, const Size2&) = default;
};

/// 8-bit RGB, row-major, channels interleaved.
struct ImageBuffer {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> data;

  ImageBuffer() = default;
  ImageBuffer(Index w, Index h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w * h * 3), fill) {}

  static constexpr Index channels = 3;
  Index byte_count() const noexcept { return width * height * channels; }
  std::uint8_t& at(Index y, Index x, Index c) { return data[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  std::uint8_t at(Index y, Index x, Index c) const {
    return data[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

/// Channel-major float image: shape [3, height, width], nominal range [0, 1].
using ImageTensor = Tensor<float>;

ImageBuffer decode_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& img);

/// Bilinear resample with half-pixel centers; identity when sizes match.
ImageBuffer resize_bilinear(const ImageBuffer& img, Size2 target);

/// Decode and resize to `target`. Grayscale inputs are promoted to RGB.
ImageBuffer load_image(const std::filesystem::path& path, Size2 target);

ImageTensor to_tensor(const ImageBuffer& img);
/// Clamp to [0,1] and quantize with round-half-up. Rejects non-finite values.
ImageBuffer from_tensor(const ImageTensor& t);

/// Stack equally sized [3,H,W] tensors into a [B,3,H,W] batch.
Tensor<float> stack_images(const std::vector<ImageTensor>& images);
/// Slice sample `b` out of a [B,3,H,W] batch.
ImageTensor unstack_image(const Tensor<float>& batch, Index b);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

double mse(const ImageBuffer& a, const ImageBuffer& b);
/// 10*log10(255^2 / MSE); +inf for identical images.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, L 255), mean of
/// the valid-region SSIM map per channel, averaged over channels.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

struct DatasetHandle {
  std::filesystem::path root;
  std::vector<std::string> files;
  Size2 target;

  std::size_t size() const noexcept { return files.size(); }
};

/// Lexicographic listing of the decodable PNG files in `dir`.
DatasetHandle list_dataset(const std::filesystem::path& dir, Size2 target);
std::vector<ImageBuffer> load_dataset(const DatasetHandle& handle);

}  // namespace dsteg
