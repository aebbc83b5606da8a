#include "tov/taxonomy.hpp"

#include <set>

#include "tov/error.hpp"

namespace tov {

std::string_view to_string(SourceKind kind) { return kind == SourceKind::Natural ? "natural" : "man-made"; }

SourceKind parse_source_kind(std::string_view text) {
  if (text == "natural") return SourceKind::Natural;
  if (text == "man-made") return SourceKind::ManMade;
  throw Error(Errc::MalformedManifest, "unknown sample kind '" + std::string(text) + "'");
}

Taxonomy::Taxonomy(std::vector<SceneCategory> categories) : categories_(std::move(categories)) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    categories_[i].id = static_cast<int>(i);
    if (!names.insert(categories_[i].name).second) {
      throw Error(Errc::TaxonomyOverlap, "category '" + categories_[i].name + "' listed twice");
    }
  }
}

namespace {

const char* const kNaturalNames[] = {"Forest",   "Grassland", "Shrubland", "Cropland", "Wetland",
                                     "Water",    "Tundra",    "Bareland",  "Snow/Ice"};

const char* const kManMadeNames[] = {
    "Airport",        "Parking",        "Commercial area", "Residential area", "School",
    "Sports center",  "Industrial area", "Harbor",         "Railway station",  "Bridge",
    "Church",         "Stadium",        "Storage tank",    "Power station",    "Square",
    "Park",           "Golf course",    "Cemetery",        "Hospital",         "Wastewater plant",
    "Dam",            "Swimming pool",
};

std::vector<SceneCategory> make(SourceKind kind) {
  std::vector<SceneCategory> out;
  if (kind == SourceKind::Natural) {
    for (const char* n : kNaturalNames) out.push_back({0, n, kind});
  } else {
    for (const char* n : kManMadeNames) out.push_back({0, n, kind});
  }
  return out;
}

}  // namespace

Taxonomy Taxonomy::standard_natural() { return Taxonomy(make(SourceKind::Natural)); }
Taxonomy Taxonomy::standard_man_made() { return Taxonomy(make(SourceKind::ManMade)); }

const Taxonomy& Taxonomy::standard() {
  static const Taxonomy all = [] {
    auto cats = make(SourceKind::Natural);
    auto man = make(SourceKind::ManMade);
    cats.insert(cats.end(), man.begin(), man.end());
    return Taxonomy(std::move(cats));
  }();
  return all;
}

int Taxonomy::count(SourceKind kind) const {
  int n = 0;
  for (const auto& c : categories_) n += c.kind == kind;
  return n;
}

std::optional<SceneCategory> Taxonomy::find(std::string_view name) const {
  for (const auto& c : categories_)
    if (c.name == name) return c;
  return std::nullopt;
}

}  // namespace tov
