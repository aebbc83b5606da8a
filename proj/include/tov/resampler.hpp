#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tov/taxonomy.hpp"

namespace tov {

struct DatasetManifest {
  std::string id;
  std::uint64_t seed = 0;
  Taxonomy taxonomy;
  std::vector<Sample> records;
  std::map<std::string, std::size_t> shortfall;  // man-made classes that could not fill n_k'

  /// Per-category tally indexed by category id.
  std::vector<std::size_t> counts() const;
  std::size_t count(const std::string& label) const;

  /// Throws MalformedManifest when a record's label is not in the taxonomy
  /// or its kind disagrees with the category.
  void validate() const;

  bool operator==(const DatasetManifest&) const = default;
};

/// Concatenates records and taxonomies. Throws TaxonomyOverlap when a
/// category name appears in both.
DatasetManifest merge_manifests(const DatasetManifest& nat, const DatasetManifest& man);

struct RebalancePlan {
  std::size_t n_k = 0;        // per natural class
  std::size_t n_k_prime = 0;  // target per man-made class
};

/// n_k = smallest natural class, n_k' = floor(n_k * C_nature / C_man-made).
/// Throws EmptyNaturalClass.
RebalancePlan rebalance_plan(const DatasetManifest& m);

/// Draws n_k records per natural class and min(n_k', available) per man-made
/// class without replacement. Kept records stay in input order.
DatasetManifest rebalance(const DatasetManifest& m, std::uint64_t seed);

// JSON lines: one header object, then one object per record.
void write_manifest(std::ostream& out, const DatasetManifest& m);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(std::istream& in);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace tov
