#include <map>
#include <queue>
#include <set>

#include "test_util.hpp"
#include "tov/oversegment.hpp"

using namespace tov;
using namespace tov::seg;
using tov::testing::TempDir;

namespace {

// Oracle: 8-connected components of exactly equal colour.
SegmentLabelMap equal_colour_components(const geo::GeoRaster& patch) {
  const int w = patch.width(), h = patch.height();
  SegmentLabelMap out{w, h, std::vector<std::uint32_t>(static_cast<std::size_t>(w) * h, UINT32_MAX), 0};
  auto same = [&](int p, int q) {
    for (int b = 0; b < patch.bands(); ++b)
      if (patch.data()[p * patch.bands() + b] != patch.data()[q * patch.bands() + b]) return false;
    return true;
  };
  for (int start = 0; start < w * h; ++start) {
    if (out.labels[start] != UINT32_MAX) continue;
    const auto id = static_cast<std::uint32_t>(out.num_segments++);
    std::queue<int> q;
    q.push(start);
    out.labels[start] = id;
    while (!q.empty()) {
      const int p = q.front();
      q.pop();
      const int pc = p % w, pr = p / w;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int c = pc + dc, r = pr + dr;
          if (c < 0 || r < 0 || c >= w || r >= h) continue;
          const int nb = r * w + c;
          if (out.labels[nb] == UINT32_MAX && same(p, nb)) {
            out.labels[nb] = id;
            q.push(nb);
          }
        }
    }
  }
  return out;
}

bool is_valid_partition(const SegmentLabelMap& m) {
  if (m.num_segments < 1) return false;
  std::vector<int> sizes(m.num_segments, 0);
  for (auto l : m.labels) {
    if (l >= static_cast<std::uint32_t>(m.num_segments)) return false;
    ++sizes[l];
  }
  for (int s : sizes)
    if (s == 0) return false;
  // Each segment must be a single 8-connected component.
  std::vector<char> seen(m.labels.size(), 0);
  std::vector<char> segment_seen(m.num_segments, 0);
  for (int start = 0; start < static_cast<int>(m.labels.size()); ++start) {
    if (seen[start]) continue;
    const auto id = m.labels[start];
    if (segment_seen[id]) return false;
    segment_seen[id] = 1;
    std::queue<int> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const int p = q.front();
      q.pop();
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int c = p % m.width + dc, r = p / m.width + dr;
          if (c < 0 || r < 0 || c >= m.width || r >= m.height) continue;
          const int nb = r * m.width + c;
          if (!seen[nb] && m.labels[nb] == id) {
            seen[nb] = 1;
            q.push(nb);
          }
        }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("build_grid_graph edge counts and weights") {
  CHECK(build_grid_graph(tov::testing::solid_rgb(1, 1, 5, 5, 5)).empty());
  CHECK(build_grid_graph(tov::testing::solid_rgb(2, 2, 5, 5, 5)).size() == 6);
  // w*h pixels: (w-1)h + w(h-1) rook + 2(w-1)(h-1) diagonal.
  CHECK(build_grid_graph(tov::testing::solid_rgb(5, 3, 5, 5, 5)).size() == 4 * 3 + 5 * 2 + 2 * 4 * 2);

  const geo::GeoRaster pair(2, 1, 3, {0, 0, 0, 3, 4, 0});
  const auto edges = build_grid_graph(pair, 0.0);
  REQUIRE(edges.size() == 1);
  CHECK(edges[0].weight == 5.0);
  CHECK(edges[0].a == 0);
  CHECK(edges[0].b == 1);

  CHECK_ERRC(build_grid_graph(geo::GeoRaster{}), Errc::EmptyPatch);
}

TEST_CASE("smoothing preserves constant images") {
  const auto flat = tov::testing::solid_rgb(9, 7, 40, 80, 120);
  const auto smoothed = smooth(flat, 0.8);
  for (std::size_t i = 0; i < smoothed.size(); ++i) CHECK(smoothed[i] == doctest::Approx(flat.data()[i]));
}

TEST_CASE("felzenszwalb examples") {
  for (double k : {1.0, 50.0, 300.0, 5000.0}) {
    const auto m = felzenszwalb(tov::testing::solid_rgb(16, 16, 90, 30, 200), {k, 1, 0.8});
    CHECK(m.num_segments == 1);
  }

  const auto halves = tov::testing::two_half(16, 16);
  const auto m = felzenszwalb(halves, {1.0, 1, 0.0});
  const auto oracle = equal_colour_components(halves);
  REQUIRE(oracle.num_segments == 2);
  CHECK(m.num_segments == 2);
  CHECK(m.labels == oracle.labels);

  CHECK_ERRC(felzenszwalb(halves, {0.0, 1, 0.8}), Errc::NonPositiveParameter);
  CHECK_ERRC(felzenszwalb(halves, {10.0, 0, 0.8}), Errc::NonPositiveParameter);
  CHECK_ERRC(felzenszwalb(geo::GeoRaster{}, {}), Errc::EmptyPatch);
}

TEST_CASE("felzenszwalb respects min_size over random patches") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto patch = tov::testing::noise_rgb(32, 32, seed);
    const auto m = felzenszwalb(patch, {300.0, 20, 0.8});
    REQUIRE(is_valid_partition(m));
    std::vector<int> sizes(m.num_segments, 0);
    for (auto l : m.labels) ++sizes[l];
    for (int s : sizes) CHECK(s >= 20);
  }
}

TEST_CASE("felzenszwalb is deterministic") {
  const auto patch = tov::testing::blocky_rgb(40, 30, 99);
  const auto a = felzenszwalb(patch, {200.0, 10, 0.8});
  const auto b = felzenszwalb(patch, {200.0, 10, 0.8});
  CHECK(a.labels == b.labels);
  CHECK(a.num_segments == b.num_segments);
}

TEST_CASE("label map debug dump round trip") {
  TempDir dir("seg");
  const auto m = felzenszwalb(tov::testing::blocky_rgb(20, 12, 3), {100.0, 5, 0.8});
  write_label_map(dir / "labels.bin", m);
  const auto back = read_label_map(dir / "labels.bin");
  CHECK(back.width == m.width);
  CHECK(back.height == m.height);
  CHECK(back.labels == m.labels);
  CHECK(back.num_segments == m.num_segments);
}
