#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tov/geo_raster.hpp"

namespace tov::seg {

struct SegmentLabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> labels;  // row-major, ids 0..num_segments-1
  int num_segments = 0;

  std::uint32_t at(int col, int row) const {
    return labels[static_cast<std::size_t>(row) * width + col];
  }
};

struct Edge {
  double weight = 0.0;
  int a = 0;  // smaller pixel index
  int b = 0;  // larger pixel index
};

/// Strict total order used when sorting edges: weight, then a, then b.
inline bool edge_less(const Edge& x, const Edge& y) {
  if (x.weight != y.weight) return x.weight < y.weight;
  if (x.a != y.a) return x.a < y.a;
  return x.b < y.b;
}

struct FelzenszwalbParams {
  double k = 300.0;
  int min_size = 50;
  double sigma = 0.8;
};

/// Per-channel separable Gaussian smoothing; sigma == 0 returns the input as doubles.
std::vector<double> smooth(const geo::GeoRaster& patch, double sigma);

/// One edge per 8-neighbour pixel pair, weighted by the Euclidean distance
/// between smoothed pixel values. Throws EmptyPatch.
std::vector<Edge> build_grid_graph(const geo::GeoRaster& patch, double sigma = 0.8);

/// Graph-based segmentation with the k/|C| merge threshold followed by a
/// min_size merge pass. Labels are numbered by first appearance in raster order.
/// Throws EmptyPatch, NonPositiveParameter.
SegmentLabelMap felzenszwalb(const geo::GeoRaster& patch, const FelzenszwalbParams& params = {});

/// Debug dump: "TOVL", u32 width, u32 height, u32 labels (all little-endian).
void write_label_map(const std::filesystem::path& path, const SegmentLabelMap& map);
SegmentLabelMap read_label_map(const std::filesystem::path& path);

}  // namespace tov::seg
