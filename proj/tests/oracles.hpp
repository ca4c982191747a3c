#pragma once

// Deliberately naive reference implementations used to cross-check the metrics module.

#include "agan/data.hpp"

#include <cmath>

namespace agan::oracle {

inline Image8 random_image(Index channels, Index n, Prng& prng) {
  Image8 img(channels, n, n);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(prng.uniform_int(256));
  return img;
}

/// Random blob mask: union of a few axis-aligned rectangles.
inline Tensor<float> random_mask(Index n, Prng& prng) {
  Tensor<float> m = Tensor<float>::zeros({1, n, n});
  const int rects = 1 + static_cast<int>(prng.uniform_int(3));
  for (int r = 0; r < rects; ++r) {
    const Index y0 = static_cast<Index>(prng.uniform_int(static_cast<std::uint64_t>(n)));
    const Index x0 = static_cast<Index>(prng.uniform_int(static_cast<std::uint64_t>(n)));
    const Index h = 1 + static_cast<Index>(prng.uniform_int(static_cast<std::uint64_t>(n / 2)));
    const Index w = 1 + static_cast<Index>(prng.uniform_int(static_cast<std::uint64_t>(n / 2)));
    for (Index y = y0; y < std::min(n, y0 + h); ++y)
      for (Index x = x0; x < std::min(n, x0 + w); ++x) m.mutable_data()[y * n + x] = 1.0f;
  }
  return m;
}

/// Per-pixel MSE over every channel and position, background pixels compared directly and
/// object pixels contributing zero error.
inline double psnr(const Image8& a, const Image8& b, const Tensor<float>& mask) {
  long double sse = 0;
  long count = 0;
  for (Index c = 0; c < a.channels; ++c)
    for (Index y = 0; y < a.height; ++y)
      for (Index x = 0; x < a.width; ++x) {
        ++count;
        if (mask[y * a.width + x] >= 0.5f) continue;
        const long double d = static_cast<long double>(a.at(c, y, x)) - b.at(c, y, x);
        sse += d * d;
      }
  const long double mse = sse / count;
  if (mse == 0) return INFINITY;
  return static_cast<double>(10.0L * std::log10(255.0L * 255.0L / mse));
}

inline double plain_psnr(const Image8& a, const Image8& b) {
  long double sse = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const long double d = static_cast<long double>(a.pixels[i]) - b.pixels[i];
    sse += d * d;
  }
  const long double mse = sse / static_cast<long double>(a.pixels.size());
  if (mse == 0) return INFINITY;
  return static_cast<double>(10.0L * std::log10(255.0L * 255.0L / mse));
}

/// Windowed SSIM evaluated window by window with a 2-D Gaussian (11x11, sigma 1.5) and the
/// textbook weighted moments.
inline double ssim(const Image8& a, const Image8& b, const Tensor<float>& mask) {
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  double w2d[win][win];
  double total = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      w2d[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
      total += w2d[i][j];
    }
  for (auto& row : w2d)
    for (double& v : row) v /= total;
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  auto px = [&](const Image8& img, Index c, Index y, Index x) {
    return mask[y * img.width + x] >= 0.5f ? 0.0 : static_cast<double>(img.at(c, y, x));
  };
  double per_channel = 0;
  for (Index c = 0; c < a.channels; ++c) {
    double sum = 0;
    int windows = 0;
    for (Index y0 = 0; y0 + win <= a.height; ++y0)
      for (Index x0 = 0; x0 + win <= a.width; ++x0) {
        double ma = 0, mb = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            ma += w2d[i][j] * px(a, c, y0 + i, x0 + j);
            mb += w2d[i][j] * px(b, c, y0 + i, x0 + j);
          }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double da = px(a, c, y0 + i, x0 + j) - ma, db = px(b, c, y0 + i, x0 + j) - mb;
            va += w2d[i][j] * da * da;
            vb += w2d[i][j] * db * db;
            cov += w2d[i][j] * da * db;
          }
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
    per_channel += sum / windows;
  }
  return per_channel / static_cast<double>(a.channels);
}

}  // namespace agan::oracle
