#pragma once

// Procedural images for the training tests and the acceptance benchmarks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "tov/augment.hpp"
#include "tov/detail/rng.hpp"

namespace tov::toy {

using ssl::Image;

inline constexpr int kMosaicClasses = 8;

// General corpus: one or two gratings of any orientation and period over a
// mosaic of random colour cells, plus a few soft blobs.
inline Image texture_image(int side, detail::Rng& rng) {
  const int cells = 2 + int(rng.below(4));
  std::vector<double> cx(cells), cy(cells), col(3 * cells);
  for (int k = 0; k < cells; ++k) {
    cx[k] = rng.uniform(0, side);
    cy[k] = rng.uniform(0, side);
    const double grey = rng.uniform(0.3, 0.7);
    for (int c = 0; c < 3; ++c) col[3 * k + c] = grey + rng.uniform(-0.05, 0.05);
  }
  const int gratings = 1 + int(rng.below(2));
  double theta[2], period[2], phase[2], amp[2];
  for (int g = 0; g < gratings; ++g) {
    theta[g] = rng.uniform(0.0, std::numbers::pi);
    period[g] = std::exp(rng.uniform(std::log(3.0), std::log(12.0)));
    phase[g] = rng.uniform(0.0, 2 * std::numbers::pi);
    amp[g] = rng.uniform(0.15, 0.3);
  }
  struct Blob {
    double x, y, r, v;
  };
  std::vector<Blob> blobs(rng.below(3));
  for (auto& b : blobs) b = {rng.uniform(0, side), rng.uniform(0, side), rng.uniform(2, side / 4.0), rng.uniform(-0.3, 0.3)};

  Image img({3, std::size_t(side), std::size_t(side)});
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      int best = 0;
      double bd = INFINITY;
      for (int k = 0; k < cells; ++k) {
        const double d = (x - cx[k]) * (x - cx[k]) + (y - cy[k]) * (y - cy[k]);
        if (d < bd) bd = d, best = k;
      }
      double wave = 0.0;
      for (int g = 0; g < gratings; ++g) {
        const double u = x * std::cos(theta[g]) + y * std::sin(theta[g]);
        wave += amp[g] * std::sin(2 * std::numbers::pi * u / period[g] + phase[g]);
      }
      double blob = 0.0;
      for (const auto& b : blobs) blob += b.v * std::exp(-((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (2 * b.r * b.r));
      for (int c = 0; c < 3; ++c) {
        img[(std::size_t(c) * side + y) * side + x] = std::clamp(col[3 * best + c] + wave + blob, 0.0, 1.0);
      }
    }
  return img;
}

// Specialized corpus: class = grating orientation (4) x period (2). The
// grating is laid over a mosaic of 2-4 random colour cells with random
// contrast, so colour and brightness carry no class information.
inline Image mosaic_image(int cls, int side, detail::Rng& rng) {
  static constexpr double kPeriods[2] = {4.0, 8.0};
  const double theta = (cls % 4) * std::numbers::pi / 4 + rng.uniform(-0.08, 0.08);
  const double period = kPeriods[cls / 4] * rng.uniform(0.92, 1.08);
  const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
  const double contrast = rng.uniform(0.15, 0.35);

  const int cells = 2 + int(rng.below(3));
  std::vector<double> cx(cells), cy(cells), col(3 * cells);
  for (int k = 0; k < cells; ++k) {
    cx[k] = rng.uniform(0, side);
    cy[k] = rng.uniform(0, side);
    for (int c = 0; c < 3; ++c) col[3 * k + c] = rng.uniform(0.15, 0.85);
  }
  Image img({3, std::size_t(side), std::size_t(side)});
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      int best = 0;
      double bd = INFINITY;
      for (int k = 0; k < cells; ++k) {
        const double d = (x - cx[k]) * (x - cx[k]) + (y - cy[k]) * (y - cy[k]);
        if (d < bd) bd = d, best = k;
      }
      const double u = x * std::cos(theta) + y * std::sin(theta);
      const double wave = contrast * std::sin(2 * std::numbers::pi * u / period + phase);
      for (int c = 0; c < 3; ++c) {
        img[(std::size_t(c) * side + y) * side + x] = std::clamp(col[3 * best + c] + wave, 0.0, 1.0);
      }
    }
  return img;
}

inline std::vector<Image> general_corpus(int n, int side, std::uint64_t seed) {
  detail::Rng rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(texture_image(side, rng));
  return out;
}

struct Labelled {
  std::vector<Image> images;
  std::vector<int> labels;
};

// `per_class[c]` images of class c, interleaved class by class.
inline Labelled mosaic_corpus(const std::vector<int>& per_class, int side, std::uint64_t seed) {
  detail::Rng rng(seed);
  Labelled out;
  int most = 0;
  for (int n : per_class) most = std::max(most, n);
  for (int i = 0; i < most; ++i)
    for (int c = 0; c < int(per_class.size()); ++c) {
      if (i >= per_class[c]) continue;
      out.images.push_back(mosaic_image(c, side, rng));
      out.labels.push_back(c);
    }
  return out;
}

inline Labelled mosaic_corpus(int per_class, int side, std::uint64_t seed) {
  return mosaic_corpus(std::vector<int>(kMosaicClasses, per_class), side, seed);
}

}  // namespace tov::toy
