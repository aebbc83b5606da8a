#include <map>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "tov/resampler.hpp"

using namespace tov;

namespace {

Taxonomy make_taxonomy(const std::vector<std::string>& nat, const std::vector<std::string>& man) {
  std::vector<SceneCategory> cats;
  for (const auto& n : nat) cats.push_back({0, n, SourceKind::Natural});
  for (const auto& n : man) cats.push_back({0, n, SourceKind::ManMade});
  return Taxonomy(std::move(cats));
}

// Records are distinguishable by their window origin.
DatasetManifest make_manifest(const Taxonomy& tax, const std::vector<std::pair<std::string, int>>& counts) {
  DatasetManifest m;
  m.id = "toy";
  m.taxonomy = tax;
  int serial = 0;
  for (const auto& [label, n] : counts) {
    const auto kind = tax.find(label)->kind;
    for (int i = 0; i < n; ++i, ++serial) m.records.push_back({"img" + std::to_string(serial % 3), {serial, 0, 32, 32}, label, kind, {}});
  }
  return m;
}

std::string dump(const DatasetManifest& m) {
  std::ostringstream os;
  write_manifest(os, m);
  return os.str();
}

std::map<std::string, std::size_t> tally(const DatasetManifest& m) {
  std::map<std::string, std::size_t> t;
  for (const auto& s : m.records) ++t[s.label];
  return t;
}

}  // namespace

TEST_CASE("merge_manifests examples") {
  const auto nat_tax = make_taxonomy({"Forest", "Water"}, {});
  const auto man_tax = make_taxonomy({}, {"Airport"});
  const auto nat = make_manifest(nat_tax, {{"Forest", 7}, {"Water", 5}});
  const auto man = make_manifest(man_tax, {{"Airport", 8}});

  const auto merged = merge_manifests(nat, man);
  CHECK(merged.records.size() == 20);
  CHECK(merged.counts() == std::vector<std::size_t>{7, 5, 8});
  CHECK(merged.taxonomy.size() == 3);
  CHECK(merged.taxonomy.at(2).name == "Airport");

  DatasetManifest empty_man;
  empty_man.taxonomy = man_tax;
  CHECK(merge_manifests(nat, empty_man).records == nat.records);
  DatasetManifest empty_nat;
  empty_nat.taxonomy = nat_tax;
  CHECK(merge_manifests(empty_nat, man).records == man.records);

  CHECK_ERRC(merge_manifests(nat, nat), Errc::TaxonomyOverlap);
}

TEST_CASE("rebalance worked example") {
  const auto tax = make_taxonomy({"Forest", "Water", "Cropland"}, {"Airport", "Parking"});
  const auto m = make_manifest(tax, {{"Forest", 10}, {"Water", 4}, {"Cropland", 7}, {"Airport", 9}, {"Parking", 9}});
  const auto plan = rebalance_plan(m);
  CHECK(plan.n_k == 4);
  CHECK(plan.n_k_prime == 6);  // floor(4 * 3 / 2)

  const auto out = rebalance(m, 7);
  CHECK(out.records.size() == 24);
  CHECK(tally(out) == std::map<std::string, std::size_t>{
                          {"Forest", 4}, {"Water", 4}, {"Cropland", 4}, {"Airport", 6}, {"Parking", 6}});
  CHECK(out.shortfall.empty());
}

TEST_CASE("rebalance keeps an already balanced natural side") {
  const auto tax = make_taxonomy({"a", "b"}, {});
  const auto m = make_manifest(tax, {{"a", 5}, {"b", 5}});
  CHECK(rebalance(m, 1).records == m.records);
}

TEST_CASE("rebalance records man-made shortfall") {
  const auto tax = make_taxonomy({"a", "b"}, {"x", "y"});
  const auto m = make_manifest(tax, {{"a", 4}, {"b", 6}, {"x", 2}, {"y", 10}});
  const auto out = rebalance(m, 3);
  CHECK(out.count("x") == 2);
  CHECK(out.count("y") == 4);
  CHECK(out.shortfall == std::map<std::string, std::size_t>{{"x", 2}});
}

TEST_CASE("rebalance errors") {
  const auto tax = make_taxonomy({"a", "b"}, {"x"});
  CHECK_ERRC(rebalance(make_manifest(tax, {{"a", 3}, {"x", 3}}), 0), Errc::EmptyNaturalClass);
  CHECK_ERRC(rebalance(make_manifest(make_taxonomy({}, {"x"}), {{"x", 3}}), 0), Errc::EmptyNaturalClass);

  auto bad = make_manifest(tax, {{"a", 1}, {"b", 1}});
  bad.records[0].kind = SourceKind::ManMade;
  CHECK_ERRC(rebalance(bad, 0), Errc::MalformedManifest);
}

TEST_CASE("rebalance properties on random manifests") {
  std::mt19937 gen(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int c_nat = 1 + static_cast<int>(gen() % 6);
    const int c_man = static_cast<int>(gen() % 6);
    std::vector<std::string> nat, man;
    std::vector<std::pair<std::string, int>> counts;
    for (int i = 0; i < c_nat; ++i) {
      nat.push_back("n" + std::to_string(i));
      counts.push_back({nat.back(), 1 + static_cast<int>(gen() % 40)});
    }
    for (int i = 0; i < c_man; ++i) {
      man.push_back("m" + std::to_string(i));
      counts.push_back({man.back(), static_cast<int>(gen() % 60)});
    }
    const auto m = make_manifest(make_taxonomy(nat, man), counts);

    // Oracle: smallest natural count and the floor formula.
    std::size_t n_k = SIZE_MAX;
    for (const auto& [label, n] : counts)
      if (label[0] == 'n') n_k = std::min<std::size_t>(n_k, n);
    const std::size_t n_k_prime = c_man == 0 ? 0 : n_k * c_nat / c_man;

    const std::uint64_t seed = gen();
    const auto out = rebalance(m, seed);
    for (const auto& [label, n] : counts) {
      const std::size_t want = label[0] == 'n' ? n_k : std::min<std::size_t>(n_k_prime, n);
      CHECK(out.count(label) == want);
    }

    // Subset, no repeats, input order kept.
    std::set<int> seen;
    int last = -1;
    for (const auto& s : out.records) {
      CHECK(seen.insert(s.window.col0).second);
      CHECK(s.window.col0 > last);
      last = s.window.col0;
      CHECK(m.records[s.window.col0] == s);
    }

    CHECK(dump(rebalance(m, seed)) == dump(out));
    const auto other = rebalance(m, seed + 1);
    CHECK(other.counts() == out.counts());

    if (out.shortfall.empty()) CHECK(dump(rebalance(out, seed)) == dump(out));
  }
}

TEST_CASE("different seeds select different subsets") {
  const auto tax = make_taxonomy({"a", "b"}, {});
  const auto m = make_manifest(tax, {{"a", 50}, {"b", 10}});
  std::set<std::string> distinct;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto out = rebalance(m, seed);
    out.seed = 0;
    distinct.insert(dump(out));
  }
  CHECK(distinct.size() > 1);
}

TEST_CASE("manifest JSON lines round trip") {
  const auto tax = make_taxonomy({"Forest"}, {"Airport"});
  auto m = make_manifest(tax, {{"Forest", 2}, {"Airport", 1}});
  m.seed = 99;
  m.records[0].score = -0.123456789012345678;
  m.shortfall["Airport"] = 3;
  const auto text = dump(m);
  CHECK(text.substr(0, text.find('\n')) ==
        R"({"dataset":"toy","seed":99,"taxonomy":[{"name":"Forest","kind":"natural"},{"name":"Airport","kind":"man-made"}],"shortfall":{"Airport":3}})");
  std::istringstream in(text);
  const auto back = read_manifest(in);
  CHECK(back == m);
  CHECK(dump(back) == text);

  tov::testing::TempDir dir("manifest");
  write_manifest(dir / "m.jsonl", m);
  CHECK(read_manifest(dir / "m.jsonl") == m);
  CHECK_ERRC(read_manifest(dir / "missing.jsonl"), Errc::Io);
}

TEST_CASE("read_manifest errors") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_manifest(in);
  };
  const std::string header = R"({"dataset":"d","seed":1,"taxonomy":[{"name":"Forest","kind":"natural"}]})";
  CHECK(parse(header + "\n").records.empty());
  CHECK_ERRC(parse(""), Errc::MalformedManifest);
  CHECK_ERRC(parse("{not json\n"), Errc::MalformedManifest);
  CHECK_ERRC(parse(R"({"dataset":"d","seed":1})"), Errc::MalformedManifest);
  CHECK_ERRC(parse(header + "\n" + R"({"image":"a","x":0,"y":0,"w":1,"h":1,"label":"Lake","kind":"natural"})"),
             Errc::MalformedManifest);
  CHECK_ERRC(parse(header + "\n" + R"({"image":"a","x":"0","y":0,"w":1,"h":1,"label":"Forest","kind":"natural"})"),
             Errc::MalformedManifest);
  CHECK_ERRC(parse(header + "\n" + R"({"image":"a","x":0,"y":0,"w":1,"h":1,"label":"Forest","kind":"urban"})"),
             Errc::MalformedManifest);
}
