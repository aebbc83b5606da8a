#pragma once

#include <ostream>
#include <string_view>
#include <utility>
#include <vector>

#include "tov/geo_raster.hpp"
#include "tov/oversegment.hpp"

namespace tov::proposal {

inline constexpr int kColorBins = 25;
inline constexpr int kTextureBins = 10;
inline constexpr int kChannels = 3;

struct Region {
  long long pixel_count = 0;
  geo::Rect bbox;
  std::vector<double> color_hist;    // kColorBins per channel, L1-normalised over all channels
  std::vector<double> texture_hist;  // kTextureBins orientation bins per channel, L1-normalised
  bool alive = true;
};

/// Regions plus their 8-connected adjacency (neighbour ids, sorted).
struct RegionGraph {
  std::vector<Region> regions;
  std::vector<std::vector<int>> neighbours;
};

/// One Region per segment. Throws DimensionMismatch when the label map does
/// not match the patch, or the patch is not 3-band.
RegionGraph initial_regions(const seg::SegmentLabelMap& labels, const geo::GeoRaster& patch);

/// s_color + s_texture + s_size + s_fill, clamped to [0, 4].
double similarity(const Region& a, const Region& b, long long patch_area);

/// Region produced by merging a and b: pixel-count weighted histogram average.
Region merge_regions(const Region& a, const Region& b);

/// Full merge history. `regions` holds the initial regions followed by one
/// region per merge; merges[i] names the two regions combined into
/// regions[initial_count + i].
struct MergeTrace {
  std::vector<Region> regions;
  std::vector<std::pair<int, int>> merges;
  int initial_count = 0;
};

/// Greedy hierarchical grouping: repeatedly merges the most similar adjacent
/// pair (ties to the smaller (min id, max id) pair) until no adjacent pair is left.
MergeTrace hierarchical_grouping(RegionGraph graph, long long patch_area);

struct SearchParams {
  seg::FelzenszwalbParams segmentation;
  int min_side = 32;
  int max_side = 0;  // 0: the patch's larger side
  int max_dim = 1024;  // patches larger than this are tiled; 0 disables tiling
};

/// Candidate boxes: every initial segment box followed by every merged box,
/// deduplicated in first-seen order, then filtered by side length. Throws EmptyPatch.
std::vector<geo::Rect> selective_search(const geo::GeoRaster& patch, const SearchParams& params = {});

/// Debug dump: one JSON object per line {image_id, col0, row0, width, height}.
void write_candidates(std::ostream& out, std::string_view image_id, const std::vector<geo::Rect>& rects);

}  // namespace tov::proposal
