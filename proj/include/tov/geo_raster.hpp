#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tov::geo {

/// Affine map from pixel (col, row) to planar geo coordinates:
///   x = origin_x + col * pixel_w + row * row_rot
///   y = origin_y + col * col_rot + row * pixel_h
/// Integer (col, row) addresses the upper-left corner of a pixel.
struct GeoTransform {
  double origin_x = 0.0;
  double pixel_w = 1.0;
  double row_rot = 0.0;
  double origin_y = 0.0;
  double col_rot = 0.0;
  double pixel_h = -1.0;

  double determinant() const { return pixel_w * pixel_h - row_rot * col_rot; }
  bool operator==(const GeoTransform&) const = default;
};

struct Rect {
  int col0 = 0;
  int row0 = 0;
  int width = 1;
  int height = 1;

  int col_end() const { return col0 + width; }
  int row_end() const { return row0 + height; }
  long long area() const { return static_cast<long long>(width) * height; }
  bool contains(int col, int row) const {
    return col >= col0 && col < col_end() && row >= row0 && row < row_end();
  }
  auto operator<=>(const Rect&) const = default;
};

/// Smallest rect covering both inputs.
Rect bounding_union(const Rect& a, const Rect& b);

struct PixelIndex {
  int col = 0;
  int row = 0;
  bool operator==(const PixelIndex&) const = default;
};

/// Row-major, band-interleaved 8-bit raster. Immutable after load by convention.
class GeoRaster {
 public:
  GeoRaster() = default;
  GeoRaster(int width, int height, int bands, std::vector<std::uint8_t> data,
            GeoTransform transform = {}, std::string crs_tag = {});

  int width() const { return width_; }
  int height() const { return height_; }
  int bands() const { return bands_; }
  const std::vector<std::uint8_t>& data() const { return data_; }
  const GeoTransform& transform() const { return transform_; }
  const std::string& crs_tag() const { return crs_tag_; }

  std::uint8_t at(int col, int row, int band = 0) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * bands_ + band];
  }

  bool contains(const Rect& r) const {
    return r.width >= 1 && r.height >= 1 && r.col0 >= 0 && r.row0 >= 0 &&
           r.col_end() <= width_ && r.row_end() <= height_;
  }

  /// Copies the window into a new raster whose transform is shifted accordingly.
  GeoRaster window(const Rect& r) const;

  /// Geo coordinates of fractional pixel position (col, row).
  std::pair<double, double> pixel_to_geo(double col, double row) const;
  std::pair<double, double> pixel_center_to_geo(int col, int row) const {
    return pixel_to_geo(col + 0.5, row + 0.5);
  }

  /// Fractional inverse-affine image of (x, y) without bounds checks.
  /// Throws SingularTransform.
  std::pair<double, double> geo_to_pixel_fractional(double x, double y) const;

 private:
  int width_ = 0;
  int height_ = 0;
  int bands_ = 0;
  std::vector<std::uint8_t> data_;
  GeoTransform transform_;
  std::string crs_tag_;
};

/// Containing pixel of (x, y). Throws SingularTransform or OutOfBounds.
PixelIndex geo_to_pixel(const GeoRaster& r, double x, double y);

/// Six-line world file in classic order: pixel_w, col_rot (y per column),
/// row_rot (x per row), pixel_h, origin_x, origin_y.
GeoTransform read_world_file(const std::filesystem::path& path);
void write_world_file(const std::filesystem::path& path, const GeoTransform& t);

/// Decodes PPM/PGM (binary P5/P6) or PNG. Georeferencing comes from `sidecar`
/// when given, else from "<stem>.wld" next to the image when present, else the
/// identity transform. crs_tag is read from "<stem>.prj" when present.
GeoRaster load_raster(const std::filesystem::path& path,
                      const std::optional<std::filesystem::path>& sidecar = std::nullopt);

/// Writes P5 (1 band) or P6 (3 bands).
void write_pnm(const std::filesystem::path& path, const GeoRaster& r);

inline constexpr int kNaturalClassCount = 9;
inline constexpr std::uint8_t kNoData = 255;

struct ClassHistogram {
  std::vector<double> p;
};

/// Fractions of each class id inside `window`. Throws WindowOutOfBounds,
/// UnknownClassId, DimensionMismatch (multi-band input).
ClassHistogram class_histogram(const GeoRaster& landcover, const Rect& window,
                               int num_classes = kNaturalClassCount);

/// Resamples `landcover` by nearest neighbour into the pixel grid of `image`.
/// Image pixels whose centre falls outside the land-cover extent get kNoData.
/// Throws CrsMismatch when tags differ, NoOverlap when nothing lands inside.
GeoRaster align_to(const GeoRaster& image, const GeoRaster& landcover);

}  // namespace tov::geo
