#include "tov/geo_raster.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tov/error.hpp"

namespace tov::geo {

namespace fs = std::filesystem;

Rect bounding_union(const Rect& a, const Rect& b) {
  const int c0 = std::min(a.col0, b.col0);
  const int r0 = std::min(a.row0, b.row0);
  const int c1 = std::max(a.col_end(), b.col_end());
  const int r1 = std::max(a.row_end(), b.row_end());
  return {c0, r0, c1 - c0, r1 - r0};
}

GeoRaster::GeoRaster(int width, int height, int bands, std::vector<std::uint8_t> data,
                     GeoTransform transform, std::string crs_tag)
    : width_(width),
      height_(height),
      bands_(bands),
      data_(std::move(data)),
      transform_(transform),
      crs_tag_(std::move(crs_tag)) {
  if (width < 1 || height < 1 || bands < 1) {
    throw Error(Errc::DimensionMismatch, "raster dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * bands) {
    throw Error(Errc::DimensionMismatch, "raster data length does not match width*height*bands");
  }
  if (transform_.pixel_w == 0.0 || transform_.pixel_h == 0.0) {
    throw Error(Errc::SingularTransform, "pixel size must be non-zero");
  }
}

GeoRaster GeoRaster::window(const Rect& r) const {
  if (!contains(r)) throw Error(Errc::WindowOutOfBounds, "window outside raster");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(r.area()) * bands_);
  const std::size_t row_bytes = static_cast<std::size_t>(r.width) * bands_;
  for (int row = 0; row < r.height; ++row) {
    const auto* src = &data_[(static_cast<std::size_t>(r.row0 + row) * width_ + r.col0) * bands_];
    std::memcpy(&out[row * row_bytes], src, row_bytes);
  }
  GeoTransform t = transform_;
  auto [x, y] = pixel_to_geo(r.col0, r.row0);
  t.origin_x = x;
  t.origin_y = y;
  return GeoRaster(r.width, r.height, bands_, std::move(out), t, crs_tag_);
}

std::pair<double, double> GeoRaster::pixel_to_geo(double col, double row) const {
  const auto& t = transform_;
  return {t.origin_x + col * t.pixel_w + row * t.row_rot,
          t.origin_y + col * t.col_rot + row * t.pixel_h};
}

std::pair<double, double> GeoRaster::geo_to_pixel_fractional(double x, double y) const {
  const auto& t = transform_;
  const double det = t.determinant();
  if (det == 0.0 || !std::isfinite(det)) {
    throw Error(Errc::SingularTransform, "geotransform is not invertible");
  }
  const double dx = x - t.origin_x;
  const double dy = y - t.origin_y;
  return {(t.pixel_h * dx - t.row_rot * dy) / det, (t.pixel_w * dy - t.col_rot * dx) / det};
}

PixelIndex geo_to_pixel(const GeoRaster& r, double x, double y) {
  auto [fc, fr] = r.geo_to_pixel_fractional(x, y);
  const double col = std::floor(fc);
  const double row = std::floor(fr);
  if (!(col >= 0 && col < r.width() && row >= 0 && row < r.height())) {
    throw Error(Errc::OutOfBounds, "geo coordinate outside raster");
  }
  return {static_cast<int>(col), static_cast<int>(row)};
}

GeoTransform read_world_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MalformedWorldFile, "cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    const std::string token = line.substr(first, last - first + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      throw Error(Errc::MalformedWorldFile, "non-numeric line '" + token + "' in " + path.string());
    }
    if (used != token.size() || !std::isfinite(v)) {
      throw Error(Errc::MalformedWorldFile, "non-numeric line '" + token + "' in " + path.string());
    }
    values.push_back(v);
  }
  if (values.size() != 6) {
    throw Error(Errc::MalformedWorldFile, "expected 6 lines, got " + std::to_string(values.size()) +
                                              " in " + path.string());
  }
  GeoTransform t;
  t.pixel_w = values[0];
  t.col_rot = values[1];
  t.row_rot = values[2];
  t.pixel_h = values[3];
  t.origin_x = values[4];
  t.origin_y = values[5];
  if (t.pixel_w == 0.0 || t.pixel_h == 0.0) {
    throw Error(Errc::MalformedWorldFile, "zero pixel size in " + path.string());
  }
  return t;
}

void write_world_file(const fs::path& path, const GeoTransform& t) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << std::setprecision(17);
  out << t.pixel_w << '\n'
      << t.col_rot << '\n'
      << t.row_rot << '\n'
      << t.pixel_h << '\n'
      << t.origin_x << '\n'
      << t.origin_y << '\n';
}

namespace {

struct Decoded {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::vector<std::uint8_t> data;
};

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::UnreadableImage, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Header tokens are whitespace separated; '#' starts a comment to end of line.
bool next_pnm_token(const std::string& buf, std::size_t& pos, long& value) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos]))) return false;
  value = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    value = value * 10 + (buf[pos] - '0');
    if (value > (1L << 30)) return false;
    ++pos;
  }
  return true;
}

Decoded decode_pnm(const std::string& buf, const fs::path& path) {
  const int bands = buf[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  long w = 0, h = 0, maxval = 0;
  if (!next_pnm_token(buf, pos, w) || !next_pnm_token(buf, pos, h) ||
      !next_pnm_token(buf, pos, maxval) || w < 1 || h < 1 || maxval < 1 || maxval > 65535 ||
      pos >= buf.size()) {
    throw Error(Errc::UnreadableImage, "bad PNM header in " + path.string());
  }
  ++pos;  // single whitespace before the raster
  const std::size_t samples = static_cast<std::size_t>(w) * h * bands;
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  if (buf.size() - pos < samples * bytes_per) {
    throw Error(Errc::UnreadableImage, "truncated PNM raster in " + path.string());
  }
  Decoded d{static_cast<int>(w), static_cast<int>(h), bands, std::vector<std::uint8_t>(samples)};
  for (std::size_t i = 0; i < samples; ++i) {
    unsigned v = 0;
    if (bytes_per == 2) {
      v = (static_cast<unsigned char>(buf[pos + 2 * i]) << 8) |
          static_cast<unsigned char>(buf[pos + 2 * i + 1]);
    } else {
      v = static_cast<unsigned char>(buf[pos + i]);
    }
    d.data[i] = maxval == 255 ? static_cast<std::uint8_t>(v)
                              : static_cast<std::uint8_t>(std::lround(255.0 * v / maxval));
  }
  return d;
}

Decoded decode_png(const std::string& buf, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, buf.data(), buf.size())) {
    throw Error(Errc::UnreadableImage, std::string("png: ") + image.message + " in " + path.string());
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Decoded d{static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1, {}};
  d.data.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, d.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(Errc::UnreadableImage, std::string("png: ") + image.message + " in " + path.string());
  }
  return d;
}

std::string read_trimmed(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

}  // namespace

GeoRaster load_raster(const fs::path& path, const std::optional<fs::path>& sidecar) {
  const std::string buf = read_all(path);
  Decoded d;
  if (buf.size() >= 2 && buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6')) {
    d = decode_pnm(buf, path);
  } else if (buf.size() >= 8 && static_cast<unsigned char>(buf[0]) == 0x89 && buf.compare(1, 3, "PNG") == 0) {
    d = decode_png(buf, path);
  } else {
    throw Error(Errc::UnreadableImage, "unsupported image format: " + path.string());
  }

  GeoTransform t;
  fs::path wld = sidecar.value_or(fs::path(path).replace_extension(".wld"));
  if (sidecar || fs::exists(wld)) t = read_world_file(wld);

  std::string crs;
  const fs::path prj = fs::path(path).replace_extension(".prj");
  if (fs::exists(prj)) crs = read_trimmed(prj);

  return GeoRaster(d.width, d.height, d.bands, std::move(d.data), t, std::move(crs));
}

void write_pnm(const fs::path& path, const GeoRaster& r) {
  if (r.bands() != 1 && r.bands() != 3) {
    throw Error(Errc::DimensionMismatch, "PNM output needs 1 or 3 bands");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << (r.bands() == 3 ? "P6" : "P5") << '\n' << r.width() << ' ' << r.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.data().data()), static_cast<std::streamsize>(r.data().size()));
}

ClassHistogram class_histogram(const GeoRaster& landcover, const Rect& window, int num_classes) {
  if (landcover.bands() != 1) throw Error(Errc::DimensionMismatch, "land-cover raster must have 1 band");
  if (!landcover.contains(window)) throw Error(Errc::WindowOutOfBounds, "histogram window outside raster");
  if (num_classes < 1) throw Error(Errc::NonPositiveParameter, "num_classes must be positive");
  std::vector<long long> counts(num_classes, 0);
  for (int row = window.row0; row < window.row_end(); ++row) {
    for (int col = window.col0; col < window.col_end(); ++col) {
      const int id = landcover.at(col, row);
      if (id >= num_classes) {
        throw Error(Errc::UnknownClassId, "class id " + std::to_string(id) + " at (" +
                                              std::to_string(col) + "," + std::to_string(row) + ")");
      }
      ++counts[id];
    }
  }
  ClassHistogram h;
  h.p.resize(num_classes);
  const double area = static_cast<double>(window.area());
  for (int c = 0; c < num_classes; ++c) h.p[c] = counts[c] / area;
  return h;
}

GeoRaster align_to(const GeoRaster& image, const GeoRaster& landcover) {
  if (image.crs_tag() != landcover.crs_tag()) {
    throw Error(Errc::CrsMismatch,
                "image crs '" + image.crs_tag() + "' vs land-cover crs '" + landcover.crs_tag() + "'");
  }
  if (landcover.bands() != 1) throw Error(Errc::DimensionMismatch, "land-cover raster must have 1 band");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(image.width()) * image.height(), kNoData);
  bool any = false;
  for (int row = 0; row < image.height(); ++row) {
    for (int col = 0; col < image.width(); ++col) {
      auto [x, y] = image.pixel_center_to_geo(col, row);
      auto [fc, fr] = landcover.geo_to_pixel_fractional(x, y);
      const double lc = std::floor(fc);
      const double lr = std::floor(fr);
      if (lc >= 0 && lc < landcover.width() && lr >= 0 && lr < landcover.height()) {
        out[static_cast<std::size_t>(row) * image.width() + col] =
            landcover.at(static_cast<int>(lc), static_cast<int>(lr));
        any = true;
      }
    }
  }
  if (!any) throw Error(Errc::NoOverlap, "image and land-cover rasters do not overlap");
  return GeoRaster(image.width(), image.height(), 1, std::move(out), image.transform(), image.crs_tag());
}

}  // namespace tov::geo
