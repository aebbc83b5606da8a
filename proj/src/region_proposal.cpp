#include "tov/region_proposal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "json.hpp"
#include "tov/error.hpp"

namespace tov::proposal {

namespace {

void l1_normalise(std::vector<double>& h) {
  double sum = 0.0;
  for (double v : h) sum += v;
  if (sum > 0.0) {
    for (double& v : h) v /= sum;
  } else {
    std::fill(h.begin(), h.end(), 1.0 / static_cast<double>(h.size()));
  }
}

double intersection(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::min(a[i], b[i]);
  return s;
}

int orientation_bin(double gx, double gy) {
  double angle = std::atan2(gy, gx);  // (-pi, pi]
  if (angle < 0) angle += 2.0 * std::numbers::pi;
  int bin = static_cast<int>(angle / (2.0 * std::numbers::pi) * kTextureBins);
  return std::min(bin, kTextureBins - 1);
}

}  // namespace

RegionGraph initial_regions(const seg::SegmentLabelMap& labels, const geo::GeoRaster& patch) {
  if (labels.width != patch.width() || labels.height != patch.height() ||
      labels.labels.size() != static_cast<std::size_t>(patch.width()) * patch.height()) {
    throw Error(Errc::DimensionMismatch, "label map does not match patch dimensions");
  }
  if (patch.bands() != kChannels) throw Error(Errc::DimensionMismatch, "selective search needs an RGB patch");
  const int w = patch.width(), h = patch.height();
  const int n = labels.num_segments;

  RegionGraph g;
  g.regions.resize(n);
  std::vector<int> c0(n, w), r0(n, h), c1(n, -1), r1(n, -1);
  for (auto& r : g.regions) {
    r.color_hist.assign(kColorBins * kChannels, 0.0);
    r.texture_hist.assign(kTextureBins * kChannels, 0.0);
  }
  std::vector<std::set<int>> adjacency(n);

  auto value = [&](int col, int row, int band) {
    return static_cast<double>(patch.at(std::clamp(col, 0, w - 1), std::clamp(row, 0, h - 1), band));
  };

  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const auto id = labels.at(col, row);
      if (id >= static_cast<std::uint32_t>(n)) throw Error(Errc::DimensionMismatch, "label id out of range");
      Region& r = g.regions[id];
      ++r.pixel_count;
      c0[id] = std::min(c0[id], col);
      r0[id] = std::min(r0[id], row);
      c1[id] = std::max(c1[id], col);
      r1[id] = std::max(r1[id], row);
      for (int b = 0; b < kChannels; ++b) {
        const int v = patch.at(col, row, b);
        r.color_hist[b * kColorBins + v * kColorBins / 256] += 1.0;
        const double gx = value(col + 1, row, b) - value(col - 1, row, b);
        const double gy = value(col, row + 1, b) - value(col, row - 1, b);
        const double mag = std::hypot(gx, gy);
        if (mag > 0.0) r.texture_hist[b * kTextureBins + orientation_bin(gx, gy)] += mag;
      }
      // Forward half of the 8-neighbourhood covers every adjacent pair once.
      const int fwd[4][2] = {{1, 0}, {-1, 1}, {0, 1}, {1, 1}};
      for (const auto& d : fwd) {
        const int nc = col + d[0], nr = row + d[1];
        if (nc < 0 || nc >= w || nr >= h) continue;
        const auto other = labels.at(nc, nr);
        if (other != id && other < static_cast<std::uint32_t>(n)) {
          adjacency[id].insert(static_cast<int>(other));
          adjacency[other].insert(static_cast<int>(id));
        }
      }
    }
  }
  g.neighbours.resize(n);
  for (int i = 0; i < n; ++i) {
    Region& r = g.regions[i];
    if (r.pixel_count == 0) throw Error(Errc::DimensionMismatch, "label map has an empty segment");
    r.bbox = {c0[i], r0[i], c1[i] - c0[i] + 1, r1[i] - r0[i] + 1};
    l1_normalise(r.color_hist);
    l1_normalise(r.texture_hist);
    g.neighbours[i].assign(adjacency[i].begin(), adjacency[i].end());
  }
  return g;
}

double similarity(const Region& a, const Region& b, long long patch_area) {
  const double area = static_cast<double>(patch_area);
  const double s_color = intersection(a.color_hist, b.color_hist);
  const double s_texture = intersection(a.texture_hist, b.texture_hist);
  const double joint = static_cast<double>(a.pixel_count + b.pixel_count);
  const double s_size = 1.0 - joint / area;
  const double s_fill = 1.0 - (static_cast<double>(geo::bounding_union(a.bbox, b.bbox).area()) - joint) / area;
  return std::clamp(s_color + s_texture + s_size + s_fill, 0.0, 4.0);
}

Region merge_regions(const Region& a, const Region& b) {
  Region m;
  m.pixel_count = a.pixel_count + b.pixel_count;
  m.bbox = geo::bounding_union(a.bbox, b.bbox);
  const double wa = static_cast<double>(a.pixel_count) / static_cast<double>(m.pixel_count);
  const double wb = 1.0 - wa;
  m.color_hist.resize(a.color_hist.size());
  m.texture_hist.resize(a.texture_hist.size());
  for (std::size_t i = 0; i < m.color_hist.size(); ++i) m.color_hist[i] = wa * a.color_hist[i] + wb * b.color_hist[i];
  for (std::size_t i = 0; i < m.texture_hist.size(); ++i)
    m.texture_hist[i] = wa * a.texture_hist[i] + wb * b.texture_hist[i];
  l1_normalise(m.color_hist);
  l1_normalise(m.texture_hist);
  return m;
}

MergeTrace hierarchical_grouping(RegionGraph graph, long long patch_area) {
  struct Candidate {
    double score;
    int lo;
    int hi;
    bool operator<(const Candidate& o) const {
      if (score != o.score) return score > o.score;
      if (lo != o.lo) return lo < o.lo;
      return hi < o.hi;
    }
  };

  MergeTrace trace;
  trace.initial_count = static_cast<int>(graph.regions.size());
  trace.regions = std::move(graph.regions);
  std::vector<std::set<int>> adj;
  adj.reserve(trace.regions.size() * 2);
  for (auto& nb : graph.neighbours) adj.emplace_back(nb.begin(), nb.end());

  std::set<Candidate> queue;
  std::vector<std::vector<Candidate>> by_region(trace.regions.size());
  auto push = [&](int a, int b) {
    const Candidate c{similarity(trace.regions[a], trace.regions[b], patch_area), std::min(a, b), std::max(a, b)};
    queue.insert(c);
    by_region[a].push_back(c);
    by_region[b].push_back(c);
  };
  for (int a = 0; a < static_cast<int>(adj.size()); ++a)
    for (int b : adj[a])
      if (a < b) push(a, b);

  while (!queue.empty()) {
    const Candidate best = *queue.begin();
    const int a = best.lo, b = best.hi;
    for (const auto& c : by_region[a]) queue.erase(c);
    for (const auto& c : by_region[b]) queue.erase(c);
    by_region[a].clear();
    by_region[b].clear();

    const int id = static_cast<int>(trace.regions.size());
    trace.regions.push_back(merge_regions(trace.regions[a], trace.regions[b]));
    trace.regions[a].alive = false;
    trace.regions[b].alive = false;
    trace.merges.emplace_back(a, b);

    std::set<int> merged_adj;
    for (int nb : adj[a])
      if (nb != b) merged_adj.insert(nb);
    for (int nb : adj[b])
      if (nb != a) merged_adj.insert(nb);
    adj.emplace_back();
    by_region.emplace_back();
    for (int nb : merged_adj) {
      adj[nb].erase(a);
      adj[nb].erase(b);
      adj[nb].insert(id);
      push(nb, id);
    }
    adj[id] = std::move(merged_adj);
    adj[a].clear();
    adj[b].clear();
  }
  return trace;
}

namespace {

std::vector<geo::Rect> search_untiled(const geo::GeoRaster& patch, const SearchParams& params) {
  const auto labels = seg::felzenszwalb(patch, params.segmentation);
  auto trace = hierarchical_grouping(initial_regions(labels, patch),
                                     static_cast<long long>(patch.width()) * patch.height());
  std::vector<geo::Rect> boxes;
  boxes.reserve(trace.regions.size());
  for (const auto& r : trace.regions) boxes.push_back(r.bbox);
  return boxes;
}

}  // namespace

std::vector<geo::Rect> selective_search(const geo::GeoRaster& patch, const SearchParams& params) {
  if (patch.width() < 1 || patch.height() < 1) throw Error(Errc::EmptyPatch, "patch has no pixels");
  if (params.min_side < 1) throw Error(Errc::NonPositiveParameter, "min_side must be >= 1");

  std::vector<geo::Rect> raw;
  const int tile = params.max_dim;
  if (tile > 0 && (patch.width() > tile || patch.height() > tile)) {
    for (int row0 = 0; row0 < patch.height(); row0 += tile) {
      for (int col0 = 0; col0 < patch.width(); col0 += tile) {
        const geo::Rect t{col0, row0, std::min(tile, patch.width() - col0), std::min(tile, patch.height() - row0)};
        for (auto r : search_untiled(patch.window(t), params)) {
          r.col0 += col0;
          r.row0 += row0;
          raw.push_back(r);
        }
      }
    }
  } else {
    raw = search_untiled(patch, params);
  }

  const int max_side = params.max_side > 0 ? params.max_side : std::max(patch.width(), patch.height());
  std::set<geo::Rect> seen;
  std::vector<geo::Rect> out;
  for (const auto& r : raw) {
    if (!seen.insert(r).second) continue;
    if (r.width < params.min_side || r.height < params.min_side) continue;
    if (r.width > max_side || r.height > max_side) continue;
    out.push_back(r);
  }
  return out;
}

void write_candidates(std::ostream& out, std::string_view image_id, const std::vector<geo::Rect>& rects) {
  for (const auto& r : rects) {
    nlohmann::ordered_json j;
    j["image_id"] = image_id;
    j["col0"] = r.col0;
    j["row0"] = r.row0;
    j["width"] = r.width;
    j["height"] = r.height;
    out << j.dump() << '\n';
  }
}

}  // namespace tov::proposal
