#include "dsteg/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dsteg/error.hpp"

namespace dsteg {

namespace fs = std::filesystem;

ImageBuffer decode_png(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::Io, "no such file: " + path.string());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(ErrorKind::Decode, "cannot decode " + path.string() + ": " + image.message);
  // Gray inputs expand to RGB through the simplified API's format conversion.
  image.format = PNG_FORMAT_RGB;
  ImageBuffer img(static_cast<Index>(image.width), static_cast<Index>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::Decode, "cannot decode " + path.string() + ": " + msg);
  }
  return img;
}

void write_png(const fs::path& path, const ImageBuffer& img) {
  if (img.byte_count() != static_cast<Index>(img.data.size()) || img.width <= 0 || img.height <= 0)
    fail(ErrorKind::InvalidArgument, "malformed image buffer");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data.data(), 0, nullptr))
    fail(ErrorKind::Io, "cannot write " + path.string() + ": " + image.message);
}

ImageBuffer resize_bilinear(const ImageBuffer& img, Size2 target) {
  if (target.height <= 0 || target.width <= 0) fail(ErrorKind::InvalidArgument, "zero-size resize target");
  if (img.width == target.width && img.height == target.height) return img;
  ImageBuffer out(target.width, target.height);
  const double sy = static_cast<double>(img.height) / static_cast<double>(target.height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(target.width);
  auto source = [](double pos, Index extent, Index& i0, Index& i1, double& frac) {
    pos = std::clamp(pos, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<Index>(std::floor(pos));
    i1 = std::min(i0 + 1, extent - 1);
    frac = pos - static_cast<double>(i0);
  };
  for (Index y = 0; y < target.height; ++y) {
    Index y0, y1;
    double fy;
    source((static_cast<double>(y) + 0.5) * sy - 0.5, img.height, y0, y1, fy);
    for (Index x = 0; x < target.width; ++x) {
      Index x0, x1;
      double fx;
      source((static_cast<double>(x) + 0.5) * sx - 0.5, img.width, x0, x1, fx);
      for (Index c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
        const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
        const double v = top * (1.0 - fy) + bottom * fy;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

ImageBuffer load_image(const fs::path& path, Size2 target) {
  if (target.height <= 0 || target.width <= 0) fail(ErrorKind::InvalidArgument, "zero-size resize target");
  return resize_bilinear(decode_png(path), target);
}

ImageTensor to_tensor(const ImageBuffer& img) {
  ImageTensor t({3, img.height, img.width});
  const Index plane = img.height * img.width;
  for (Index p = 0; p < plane; ++p)
    for (Index c = 0; c < 3; ++c)
      t[c * plane + p] = static_cast<float>(img.data[static_cast<std::size_t>(p * 3 + c)]) / 255.0f;
  return t;
}

ImageBuffer from_tensor(const ImageTensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3)
    fail(ErrorKind::ShapeMismatch, "expected [3,H,W] image tensor, got " + shape_string(t.shape()));
  if (!t.all_finite()) fail(ErrorKind::NonFinite, "image tensor contains non-finite values");
  ImageBuffer img(t.dim(2), t.dim(1));
  const Index plane = img.height * img.width;
  for (Index p = 0; p < plane; ++p)
    for (Index c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(t[c * plane + p]), 0.0, 1.0);
      img.data[static_cast<std::size_t>(p * 3 + c)] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
    }
  return img;
}

Tensor<float> stack_images(const std::vector<ImageTensor>& images) {
  if (images.empty()) fail(ErrorKind::InvalidArgument, "cannot stack an empty image list");
  const Shape& s = images.front().shape();
  Tensor<float> batch({static_cast<Index>(images.size()), s[0], s[1], s[2]});
  const Index per = images.front().size();
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].shape() != s) fail(ErrorKind::ShapeMismatch, "images in a batch must share a shape");
    batch.array().segment(static_cast<Index>(b) * per, per) = images[b].array();
  }
  return batch;
}

ImageTensor unstack_image(const Tensor<float>& batch, Index b) {
  if (batch.rank() != 4 || b < 0 || b >= batch.dim(0))
    fail(ErrorKind::ShapeMismatch, "cannot take sample from " + shape_string(batch.shape()));
  const Index per = batch.dim(1) * batch.dim(2) * batch.dim(3);
  return ImageTensor({batch.dim(1), batch.dim(2), batch.dim(3)}, batch.array().segment(b * per, per));
}

namespace {

void require_same_dims(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height)
    fail(ErrorKind::ShapeMismatch, "image dimensions differ");
}

}  // namespace

double mse(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.data.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow * kWindow> gaussian_window() {
  std::array<double, kWindow * kWindow> w{};
  double total = 0.0;
  const int r = kWindow / 2;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * kSigma * kSigma));
      w[static_cast<std::size_t>((y + r) * kWindow + x + r)] = v;
      total += v;
    }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b);
  if (a.width < kWindow || a.height < kWindow)
    fail(ErrorKind::InvalidArgument, "image smaller than the 11x11 SSIM window");
  static const auto window = gaussian_window();
  constexpr double L = 255.0;
  constexpr double C1 = (0.01 * L) * (0.01 * L);
  constexpr double C2 = (0.03 * L) * (0.03 * L);

  const Index out_h = a.height - kWindow + 1;
  const Index out_w = a.width - kWindow + 1;
  double channel_total = 0.0;
  for (Index c = 0; c < 3; ++c) {
    double map_sum = 0.0;
    for (Index y = 0; y < out_h; ++y)
      for (Index x = 0; x < out_w; ++x) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int wy = 0; wy < kWindow; ++wy)
          for (int wx = 0; wx < kWindow; ++wx) {
            const double w = window[static_cast<std::size_t>(wy * kWindow + wx)];
            const double va = a.at(y + wy, x + wx, c);
            const double vb = b.at(y + wy, x + wx, c);
            mu_a += w * va;
            mu_b += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        map_sum += ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) /
                   ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
      }
    channel_total += map_sum / static_cast<double>(out_h * out_w);
  }
  return channel_total / 3.0;
}

namespace {

bool has_png_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  if (!in.read(reinterpret_cast<char*>(sig), 8)) return false;
  return png_sig_cmp(sig, 0, 8) == 0;
}

}  // namespace

DatasetHandle list_dataset(const fs::path& dir, Size2 target) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "not a directory: " + dir.string());
  if (target.height <= 0 || target.width <= 0) fail(ErrorKind::InvalidArgument, "zero-size dataset target");
  DatasetHandle handle{dir, {}, target};
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !has_png_signature(entry.path())) continue;
    handle.files.push_back(entry.path().filename().string());
  }
  if (handle.files.empty()) fail(ErrorKind::InvalidArgument, "no decodable images in " + dir.string());
  std::sort(handle.files.begin(), handle.files.end());
  return handle;
}

std::vector<ImageBuffer> load_dataset(const DatasetHandle& handle) {
  std::vector<ImageBuffer> images;
  images.reserve(handle.files.size());
  for (const auto& name : handle.files) images.push_back(load_image(handle.root / name, handle.target));
  return images;
}

}  // namespace dsteg
