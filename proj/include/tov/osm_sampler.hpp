#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tov/geo_raster.hpp"
#include "tov/taxonomy.hpp"

namespace tov::osm {

using TagMap = std::map<std::string, std::string>;

struct Node {
  std::int64_t id = 0;
  double lon = 0.0;
  double lat = 0.0;
  TagMap tags;
  std::string timestamp;
};

struct Way {
  std::int64_t id = 0;
  std::vector<std::int64_t> refs;
  TagMap tags;
  std::string timestamp;
};

struct Member {
  std::string type;  // node | way | relation
  std::int64_t ref = 0;
  std::string role;
};

struct Relation {
  std::int64_t id = 0;
  std::vector<Member> members;
  TagMap tags;
  std::string timestamp;
};

struct Document {
  std::map<std::int64_t, Node> nodes;
  std::map<std::int64_t, Way> ways;
  std::map<std::int64_t, Relation> relations;
  std::optional<std::pair<std::string, std::string>> timestamp_range;  // min, max over elements
  int skipped_unresolved = 0;  // ways dropped for referencing missing nodes
};

/// Parses the OSM v0.6 XML subset (osm, node, way, relation, nd, member, tag).
/// Unknown elements are ignored. Throws MalformedXml (with line number) and
/// UnsupportedVersion.
Document parse_osm(std::string_view xml);
Document load_osm(const std::filesystem::path& path);
std::string serialize_osm(const Document& doc);

struct Rule {
  std::string pattern;   // lowercase tag value
  std::string category;  // man-made category name
};

class RuleTable {
 public:
  RuleTable() = default;
  /// Throws UnknownCategory when a target is not a man-made category of `taxonomy`.
  RuleTable(std::vector<Rule> rules, const Taxonomy& taxonomy = Taxonomy::standard());

  const std::vector<Rule>& rules() const { return rules_; }
  const Taxonomy& taxonomy() const { return taxonomy_; }

 private:
  std::vector<Rule> rules_;
  Taxonomy taxonomy_;
};

/// Lines "pattern => CategoryName"; '#' starts a comment. Throws MalformedRuleTable.
RuleTable parse_rule_table(std::string_view text, const Taxonomy& taxonomy = Taxonomy::standard());
RuleTable load_rule_table(const std::filesystem::path& path, const Taxonomy& taxonomy = Taxonomy::standard());
/// The rule table that ships with the project.
std::filesystem::path default_rule_table_path();

/// Tag values are case-folded and '_' read as ' ' before matching.
std::string normalise_tag_value(std::string_view value);

/// First rule, in table order, whose pattern equals any tag value.
std::optional<SceneCategory> associate_category(const TagMap& tags, const RuleTable& rules);

struct WindowParams {
  int sample_side = 64;
  double point_pad = 0.5;  // fraction of sample_side on each side of a point feature
  double area_pad = 0.1;   // fraction of bbox size added on each side of a way/relation
  int min_side = 32;
};

/// Geometry of one element: geo coordinates, and whether it is a point feature.
struct Geometry {
  std::vector<std::pair<double, double>> coords;  // (x = lon, y = lat)
  bool point = false;
};

/// Pixel window for an element, clamped to the image; nullopt when the element
/// misses the image or the clamped window is below min_side. Throws SingularTransform.
std::optional<geo::Rect> element_window(const Geometry& elem, const geo::GeoRaster& image, const WindowParams& params);

struct TimeFilter {
  std::string from;  // inclusive, ISO-8601; empty = unbounded
  std::string to;
  bool admits(const std::string& timestamp) const;
};

/// Man-made samples for every matched element with a valid window, deduplicated
/// on (window, label).
std::vector<Sample> sample_manmade(const geo::GeoRaster& image, const Document& doc, const RuleTable& rules,
                                   const WindowParams& params, const std::string& image_id,
                                   const TimeFilter& time = {});

}  // namespace tov::osm
