#include "tov/oversegment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tov/detail/le_io.hpp"
#include "tov/error.hpp"

namespace tov::seg {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(n), rank_(n, 0), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    int root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      const int next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  // Joins two roots; `weight` becomes the internal difference of the result.
  int join(int a, int b, double weight) {
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    if (rank_[a] == rank_[b]) ++rank_[a];
    internal_[a] = std::max({internal_[a], internal_[b], weight});
    return a;
  }

  int size(int root) const { return size_[root]; }
  double internal(int root) const { return internal_[root]; }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
  std::vector<int> size_;
  std::vector<double> internal_;
};

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

std::vector<double> smooth(const geo::GeoRaster& patch, double sigma) {
  const int w = patch.width(), h = patch.height(), nb = patch.bands();
  std::vector<double> src(patch.data().begin(), patch.data().end());
  if (sigma <= 0.0) return src;
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(src.size());
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      for (int b = 0; b < nb; ++b) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int c = std::clamp(col + i, 0, w - 1);
          acc += kernel[i + radius] * src[(static_cast<std::size_t>(row) * w + c) * nb + b];
        }
        tmp[(static_cast<std::size_t>(row) * w + col) * nb + b] = acc;
      }
    }
  }
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      for (int b = 0; b < nb; ++b) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int r = std::clamp(row + i, 0, h - 1);
          acc += kernel[i + radius] * tmp[(static_cast<std::size_t>(r) * w + col) * nb + b];
        }
        src[(static_cast<std::size_t>(row) * w + col) * nb + b] = acc;
      }
    }
  }
  return src;
}

std::vector<Edge> build_grid_graph(const geo::GeoRaster& patch, double sigma) {
  if (patch.width() < 1 || patch.height() < 1) throw Error(Errc::EmptyPatch, "patch has no pixels");
  if (sigma < 0.0) throw Error(Errc::NonPositiveParameter, "sigma must be >= 0");
  const int w = patch.width(), h = patch.height(), nb = patch.bands();
  const auto px = smooth(patch, sigma);
  auto dist = [&](int p, int q) {
    double acc = 0.0;
    for (int b = 0; b < nb; ++b) {
      const double d = px[static_cast<std::size_t>(p) * nb + b] - px[static_cast<std::size_t>(q) * nb + b];
      acc += d * d;
    }
    return std::sqrt(acc);
  };

  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(w) * h * 4);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const int p = row * w + col;
      if (col + 1 < w) edges.push_back({dist(p, p + 1), p, p + 1});
      if (row + 1 < h) {
        edges.push_back({dist(p, p + w), p, p + w});
        if (col + 1 < w) edges.push_back({dist(p, p + w + 1), p, p + w + 1});
        if (col > 0) edges.push_back({dist(p, p + w - 1), p, p + w - 1});
      }
    }
  }
  return edges;
}

SegmentLabelMap felzenszwalb(const geo::GeoRaster& patch, const FelzenszwalbParams& params) {
  if (patch.width() < 1 || patch.height() < 1) throw Error(Errc::EmptyPatch, "patch has no pixels");
  if (!(params.k > 0.0) || params.min_size < 1) {
    throw Error(Errc::NonPositiveParameter, "k must be > 0 and min_size >= 1");
  }
  auto edges = build_grid_graph(patch, params.sigma);
  std::sort(edges.begin(), edges.end(), edge_less);

  const int n = patch.width() * patch.height();
  DisjointSet sets(n);
  for (const Edge& e : edges) {
    const int a = sets.find(e.a);
    const int b = sets.find(e.b);
    if (a == b) continue;
    const double ta = sets.internal(a) + params.k / sets.size(a);
    const double tb = sets.internal(b) + params.k / sets.size(b);
    if (e.weight <= std::min(ta, tb)) sets.join(a, b, e.weight);
  }
  // Small components are absorbed across their cheapest remaining edge.
  for (const Edge& e : edges) {
    const int a = sets.find(e.a);
    const int b = sets.find(e.b);
    if (a != b && (sets.size(a) < params.min_size || sets.size(b) < params.min_size)) {
      sets.join(a, b, e.weight);
    }
  }

  SegmentLabelMap out;
  out.width = patch.width();
  out.height = patch.height();
  out.labels.resize(n);
  std::vector<int> id_of_root(n, -1);
  for (int p = 0; p < n; ++p) {
    const int root = sets.find(p);
    if (id_of_root[root] < 0) id_of_root[root] = out.num_segments++;
    out.labels[p] = static_cast<std::uint32_t>(id_of_root[root]);
  }
  return out;
}

void write_label_map(const std::filesystem::path& path, const SegmentLabelMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write("TOVL", 4);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.width));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.height));
  for (auto v : map.labels) detail::write_le<std::uint32_t>(out, v);
}

SegmentLabelMap read_label_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  if (!in || !in.read(magic, 4) || std::string_view(magic, 4) != "TOVL") {
    throw Error(Errc::Io, "not a label map: " + path.string());
  }
  std::uint32_t w = 0, h = 0;
  if (!detail::read_le(in, w) || !detail::read_le(in, h)) throw Error(Errc::Io, "truncated label map");
  SegmentLabelMap map;
  map.width = static_cast<int>(w);
  map.height = static_cast<int>(h);
  map.labels.resize(static_cast<std::size_t>(w) * h);
  std::uint32_t max_label = 0;
  for (auto& v : map.labels) {
    if (!detail::read_le(in, v)) throw Error(Errc::Io, "truncated label map");
    max_label = std::max(max_label, v);
  }
  map.num_segments = map.labels.empty() ? 0 : static_cast<int>(max_label) + 1;
  return map;
}

}  // namespace tov::seg
