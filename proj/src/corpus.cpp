#include "dsteg/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "dsteg/bitmsg.hpp"

namespace dsteg {

namespace {

using Color = std::array<double, 3>;

Color random_color(SplitMix64& rng) { return {rng.uniform() * 255, rng.uniform() * 255, rng.uniform() * 255}; }

Color mix(const Color& a, const Color& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

ImageBuffer procedural_image(std::uint64_t seed, Size2 size) {
  SplitMix64 rng(seed);
  const Index h = size.height, w = size.width;
  std::vector<Color> px(static_cast<std::size_t>(h * w));
  const Color c0 = random_color(rng), c1 = random_color(rng);
  const int kind = static_cast<int>(rng.below(5));
  const double angle = rng.uniform() * 2.0 * M_PI;
  const double ca = std::cos(angle), sa = std::sin(angle);

  switch (kind) {
    case 0: {  // linear gradient
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          const double u = ((x - w / 2.0) * ca + (y - h / 2.0) * sa) / std::max(h, w) + 0.5;
          px[static_cast<std::size_t>(y * w + x)] = mix(c0, c1, std::clamp(u, 0.0, 1.0));
        }
      break;
    }
    case 1: {  // stripes, optionally crossed
      const double f1 = 0.1 + rng.uniform() * 0.6, f2 = 0.1 + rng.uniform() * 0.6;
      const bool crossed = rng.below(2) == 1;
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          double v = 0.5 + 0.5 * std::sin(f1 * (x * ca + y * sa));
          if (crossed) v = 0.5 * v + 0.25 + 0.25 * std::sin(f2 * (x * sa - y * ca));
          px[static_cast<std::size_t>(y * w + x)] = mix(c0, c1, v);
        }
      break;
    }
    case 2: {  // checkers
      const Index cell = 2 + static_cast<Index>(rng.below(7));
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          px[static_cast<std::size_t>(y * w + x)] = ((x / cell + y / cell) % 2) ? c0 : c1;
      break;
    }
    case 3: {  // blobs over a background
      for (auto& p : px) p = c0;
      const int blobs = 2 + static_cast<int>(rng.below(5));
      for (int k = 0; k < blobs; ++k) {
        const Color c = random_color(rng);
        const double cx = rng.uniform() * w, cy = rng.uniform() * h;
        const double r = 2.0 + rng.uniform() * std::max(h, w) / 3.0;
        for (Index y = 0; y < h; ++y)
          for (Index x = 0; x < w; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            auto& p = px[static_cast<std::size_t>(y * w + x)];
            p = mix(p, c, std::exp(-d2 / (2.0 * r * r)));
          }
      }
      break;
    }
    default: {  // bilinear value noise on a coarse grid
      const Index grid = 3 + static_cast<Index>(rng.below(6));
      std::vector<double> lattice(static_cast<std::size_t>((grid + 1) * (grid + 1)));
      for (auto& v : lattice) v = rng.uniform();
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          const double gx = static_cast<double>(x) * grid / w, gy = static_cast<double>(y) * grid / h;
          const Index ix = static_cast<Index>(gx), iy = static_cast<Index>(gy);
          const double fx = smooth(gx - ix), fy = smooth(gy - iy);
          auto at = [&](Index a, Index b) { return lattice[static_cast<std::size_t>(b * (grid + 1) + a)]; };
          const double v = (at(ix, iy) * (1 - fx) + at(ix + 1, iy) * fx) * (1 - fy) +
                           (at(ix, iy + 1) * (1 - fx) + at(ix + 1, iy + 1) * fx) * fy;
          px[static_cast<std::size_t>(y * w + x)] = mix(c0, c1, v);
        }
      break;
    }
  }

  const double grain = rng.uniform() * 8.0;
  ImageBuffer img(w, h);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        const double noise = (rng.uniform() - 0.5) * 2.0 * grain;
        const double v = px[static_cast<std::size_t>(y * w + x)][static_cast<std::size_t>(c)] + noise;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
  return img;
}

std::vector<ImageBuffer> procedural_corpus(std::uint64_t seed, std::size_t count, Size2 size) {
  SplitMix64 rng(seed);
  std::vector<ImageBuffer> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(procedural_image(rng.next(), size));
  return out;
}

void write_corpus(const std::filesystem::path& dir, std::uint64_t seed, std::size_t count, Size2 size) {
  std::filesystem::create_directories(dir);
  const auto images = procedural_corpus(seed, count, size);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    write_png(dir / name, images[i]);
  }
}

}  // namespace dsteg
