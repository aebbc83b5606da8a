#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tov/geo_raster.hpp"

namespace tov {

enum class SourceKind { Natural, ManMade };

std::string_view to_string(SourceKind kind);
/// "natural" or "man-made"; throws MalformedManifest otherwise.
SourceKind parse_source_kind(std::string_view text);

struct SceneCategory {
  int id = 0;
  std::string name;
  SourceKind kind = SourceKind::Natural;
  bool operator==(const SceneCategory&) const = default;
};

/// Ordered category list. Ids are positions in the list.
class Taxonomy {
 public:
  Taxonomy() = default;
  explicit Taxonomy(std::vector<SceneCategory> categories);

  /// Natural land-cover classes (ids 0..8, land-cover raster order) followed
  /// by the man-made classes, 31 in total.
  static const Taxonomy& standard();
  static Taxonomy standard_natural();
  static Taxonomy standard_man_made();

  const std::vector<SceneCategory>& categories() const { return categories_; }
  std::size_t size() const { return categories_.size(); }
  int count(SourceKind kind) const;
  std::optional<SceneCategory> find(std::string_view name) const;
  const SceneCategory& at(int id) const { return categories_.at(id); }

  bool operator==(const Taxonomy&) const = default;

 private:
  std::vector<SceneCategory> categories_;
};

/// One extracted patch with its noisy category label.
struct Sample {
  std::string image_id;
  geo::Rect window;
  std::string label;
  SourceKind kind = SourceKind::Natural;
  std::optional<double> score;

  bool operator==(const Sample&) const = default;
};

}  // namespace tov
