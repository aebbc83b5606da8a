#include "tov/resampler.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "tov/detail/rng.hpp"
#include "tov/error.hpp"

namespace tov {

using nlohmann::ordered_json;

std::vector<std::size_t> DatasetManifest::counts() const {
  std::vector<std::size_t> out(taxonomy.size(), 0);
  for (const auto& s : records) {
    if (auto c = taxonomy.find(s.label)) ++out[c->id];
  }
  return out;
}

std::size_t DatasetManifest::count(const std::string& label) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const Sample& s) { return s.label == label; }));
}

void DatasetManifest::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& s = records[i];
    const auto c = taxonomy.find(s.label);
    if (!c) throw Error(Errc::MalformedManifest, "record " + std::to_string(i) + ": unknown label '" + s.label + "'");
    if (c->kind != s.kind) {
      throw Error(Errc::MalformedManifest, "record " + std::to_string(i) + ": label '" + s.label + "' is " +
                                               std::string(to_string(c->kind)) + ", record says " +
                                               std::string(to_string(s.kind)));
    }
  }
}

DatasetManifest merge_manifests(const DatasetManifest& nat, const DatasetManifest& man) {
  auto cats = nat.taxonomy.categories();
  for (const auto& c : man.taxonomy.categories()) {
    if (nat.taxonomy.find(c.name)) throw Error(Errc::TaxonomyOverlap, "category '" + c.name + "' in both manifests");
    cats.push_back(c);
  }
  DatasetManifest out;
  out.id = nat.id.empty() ? man.id : man.id.empty() ? nat.id : nat.id + "+" + man.id;
  out.seed = nat.seed;
  out.taxonomy = Taxonomy(std::move(cats));
  out.records = nat.records;
  out.records.insert(out.records.end(), man.records.begin(), man.records.end());
  return out;
}

RebalancePlan rebalance_plan(const DatasetManifest& m) {
  const auto counts = m.counts();
  RebalancePlan plan;
  bool first = true;
  for (const auto& c : m.taxonomy.categories()) {
    if (c.kind != SourceKind::Natural) continue;
    if (counts[c.id] == 0) throw Error(Errc::EmptyNaturalClass, "natural class '" + c.name + "' has no samples");
    plan.n_k = first ? counts[c.id] : std::min(plan.n_k, counts[c.id]);
    first = false;
  }
  if (first) throw Error(Errc::EmptyNaturalClass, "taxonomy has no natural classes");
  const auto c_nat = static_cast<std::size_t>(m.taxonomy.count(SourceKind::Natural));
  const auto c_man = static_cast<std::size_t>(m.taxonomy.count(SourceKind::ManMade));
  plan.n_k_prime = c_man == 0 ? 0 : plan.n_k * c_nat / c_man;
  return plan;
}

DatasetManifest rebalance(const DatasetManifest& m, std::uint64_t seed) {
  m.validate();
  const auto plan = rebalance_plan(m);

  std::vector<std::vector<std::size_t>> by_class(m.taxonomy.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) by_class[m.taxonomy.find(m.records[i].label)->id].push_back(i);

  DatasetManifest out;
  out.id = m.id;
  out.seed = seed;
  out.taxonomy = m.taxonomy;

  detail::Rng rng(seed);
  std::vector<std::size_t> keep;
  for (const auto& c : m.taxonomy.categories()) {
    auto& idx = by_class[c.id];
    const std::size_t want = c.kind == SourceKind::Natural ? plan.n_k : plan.n_k_prime;
    if (idx.size() < want) out.shortfall[c.name] = want - idx.size();
    const std::size_t take = std::min(want, idx.size());
    // Partial Fisher-Yates: the first `take` slots become a uniform subset.
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(keep.begin(), keep.end());
  out.records.reserve(keep.size());
  for (auto i : keep) out.records.push_back(m.records[i]);
  return out;
}

void write_manifest(std::ostream& out, const DatasetManifest& m) {
  ordered_json header;
  header["dataset"] = m.id;
  header["seed"] = m.seed;
  auto& tax = header["taxonomy"] = ordered_json::array();
  for (const auto& c : m.taxonomy.categories()) tax.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  if (!m.shortfall.empty()) header["shortfall"] = m.shortfall;
  out << header.dump() << '\n';
  for (const auto& s : m.records) {
    ordered_json j;
    j["image"] = s.image_id;
    j["x"] = s.window.col0;
    j["y"] = s.window.row0;
    j["w"] = s.window.width;
    j["h"] = s.window.height;
    j["label"] = s.label;
    j["kind"] = to_string(s.kind);
    if (s.score) j["score"] = *s.score;
    out << j.dump() << '\n';
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write manifest " + path.string());
  write_manifest(out, m);
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

namespace {

template <class T>
T field(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw Error(Errc::MalformedManifest, "line " + std::to_string(line) + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::MalformedManifest, "line " + std::to_string(line) + ": bad '" + key + "'");
  }
}

}  // namespace

DatasetManifest read_manifest(std::istream& in) {
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::MalformedManifest, "line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object()) throw Error(Errc::MalformedManifest, "line " + std::to_string(lineno) + ": not an object");
    if (!have_header) {
      m.id = field<std::string>(j, "dataset", lineno);
      m.seed = field<std::uint64_t>(j, "seed", lineno);
      std::vector<SceneCategory> cats;
      const auto tax = field<ordered_json>(j, "taxonomy", lineno);
      if (!tax.is_array()) throw Error(Errc::MalformedManifest, "line 1: taxonomy is not a list");
      for (const auto& c : tax) {
        cats.push_back({0, field<std::string>(c, "name", lineno), parse_source_kind(field<std::string>(c, "kind", lineno))});
      }
      m.taxonomy = Taxonomy(std::move(cats));
      if (j.contains("shortfall")) m.shortfall = field<std::map<std::string, std::size_t>>(j, "shortfall", lineno);
      have_header = true;
      continue;
    }
    Sample s;
    s.image_id = field<std::string>(j, "image", lineno);
    s.window = {field<int>(j, "x", lineno), field<int>(j, "y", lineno), field<int>(j, "w", lineno),
                field<int>(j, "h", lineno)};
    s.label = field<std::string>(j, "label", lineno);
    s.kind = parse_source_kind(field<std::string>(j, "kind", lineno));
    if (j.contains("score")) s.score = field<double>(j, "score", lineno);
    m.records.push_back(std::move(s));
  }
  if (!have_header) throw Error(Errc::MalformedManifest, "manifest has no header line");
  m.validate();
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read manifest " + path.string());
  return read_manifest(in);
}

}  // namespace tov
