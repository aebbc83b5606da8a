#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "tov/error.hpp"
#include "tov/geo_raster.hpp"

// Asserts that `expr` throws tov::Error carrying `errc`.
#define CHECK_ERRC(expr, errc)                                      \
  do {                                                              \
    bool thrown_ = false;                                           \
    try {                                                           \
      (void)(expr);                                                 \
    } catch (const tov::Error& e_) {                                \
      thrown_ = true;                                               \
      CHECK_MESSAGE(e_.code() == (errc), e_.what());                \
    }                                                               \
    CHECK_MESSAGE(thrown_, "expected tov::Error from " #expr);      \
  } while (0)

namespace tov::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tov_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline geo::GeoRaster solid_rgb(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::vector<std::uint8_t> data;
  data.reserve(static_cast<std::size_t>(w) * h * 3);
  for (int i = 0; i < w * h; ++i) {
    data.push_back(r);
    data.push_back(g);
    data.push_back(b);
  }
  return geo::GeoRaster(w, h, 3, std::move(data));
}

inline geo::GeoRaster noise_rgb(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * 3);
  for (auto& v : data) v = static_cast<std::uint8_t>(byte(rng));
  return geo::GeoRaster(w, h, 3, std::move(data));
}

// Left half black, right half white.
inline geo::GeoRaster two_half(int w, int h) {
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * 3);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col)
      for (int b = 0; b < 3; ++b)
        data[(static_cast<std::size_t>(row) * w + col) * 3 + b] = col < w / 2 ? 0 : 255;
  return geo::GeoRaster(w, h, 3, std::move(data));
}

// Piecewise-constant colour blocks plus mild noise; a more image-like patch than pure noise.
inline geo::GeoRaster blocky_rgb(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> jitter(-12, 12);
  std::uniform_int_distribution<int> block_dist(3, 10);
  const int block = block_dist(rng);
  const int bw = (w + block - 1) / block, bh = (h + block - 1) / block;
  std::vector<std::uint8_t> palette(static_cast<std::size_t>(bw) * bh * 3);
  for (auto& v : palette) v = static_cast<std::uint8_t>(byte(rng));
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * 3);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col)
      for (int b = 0; b < 3; ++b) {
        const int base = palette[(static_cast<std::size_t>(row / block) * bw + col / block) * 3 + b];
        data[(static_cast<std::size_t>(row) * w + col) * 3 + b] =
            static_cast<std::uint8_t>(std::clamp(base + jitter(rng), 0, 255));
      }
  return geo::GeoRaster(w, h, 3, std::move(data));
}

}  // namespace tov::testing
