#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixture_world.hpp"
#include "test_util.hpp"
#include "tov/resampler.hpp"
#include "tov/train.hpp"

namespace fs = std::filesystem;
using namespace tov;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

// Runs tov_forge with `args` inside `dir`.
Run forge(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + TOV_FORGE_PATH + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testing::read_bytes(out);
  r.err = testing::read_bytes(err);
  return r;
}

std::string fixture(const std::string& name) { return testing::read_bytes(fs::path(TOV_FIXTURE_DIR) / name); }

struct World {
  testing::TempDir dir{"world"};
  World() {
    toy::write_world(dir.path());
    toy::write_world_config(dir.path() / "world.ini");
  }
};

}  // namespace

TEST_CASE("version and usage errors") {
  testing::TempDir dir("cli");
  auto r = forge(dir.path(), "version");
  CHECK(r.code == 0);
  CHECK(r.out.rfind("tov_forge ", 0) == 0);
  CHECK(forge(dir.path(), "").code == 2);
  CHECK(forge(dir.path(), "frobnicate").code == 2);
  r = forge(dir.path(), "pretrain --stage 3");
  CHECK(r.code == 2);
  CHECK(r.err.find("--stage") != std::string::npos);
}

TEST_CASE("config errors are reported with the offending key") {
  testing::TempDir dir("cli_cfg");
  std::ofstream(dir.path() / "bad.ini") << "[training]\nbatchsize = 4\n";
  auto r = forge(dir.path(), "-c bad.ini gradcheck");
  CHECK(r.code == 1);
  CHECK(r.err.find("training.batchsize") != std::string::npos);
  r = forge(dir.path(), "gradcheck --set training.tau=abc");
  CHECK(r.code == 1);
  CHECK(r.err.find("training.tau") != std::string::npos);
  r = forge(dir.path(), "-c missing.ini version");
  CHECK(r.code == 0);  // version does not read the config
  r = forge(dir.path(), "-c missing.ini gradcheck");
  CHECK(r.code == 1);
  CHECK(r.err.find("missing.ini") != std::string::npos);
  // gradcheck is single-threaded and never reads the worker count.
  r = forge(dir.path(), "gradcheck --set model.channels=4", "TOV_FORGE_THREADS=zero");
  CHECK(r.code == 0);
}

TEST_CASE("sample-natural on the fixture world") {
  World w;
  auto r = forge(w.dir.path(), "-c world.ini sample-natural");
  REQUIRE(r.code == 0);
  CHECK(r.out == fixture("world_natural_counts.tsv"));
  const auto m = read_manifest(w.dir.path() / "out" / "natural.jsonl");
  CHECK(m.records.size() == 27);
  for (const auto& s : m.records) CHECK(s.window.width == 48);
  CHECK(fs::exists(w.dir.path() / "out" / "config.ini"));

  r = forge(w.dir.path(), "-c world.ini --set paths.rasters= sample-natural -o empty.jsonl");
  CHECK(r.code == 0);
  CHECK(read_manifest(w.dir.path() / "empty.jsonl").records.empty());

  r = forge(w.dir.path(), "-c world.ini --set paths.landcover=nowhere.pgm sample-natural");
  CHECK(r.code != 0);
  CHECK(r.err.find("nowhere.pgm") != std::string::npos);
}

TEST_CASE("sample-osm on the fixture world") {
  World w;
  auto r = forge(w.dir.path(), "-c world.ini sample-osm");
  REQUIRE(r.code == 0);
  CHECK(r.out == fixture("world_manmade_counts.tsv"));

  r = forge(w.dir.path(), "-c world.ini --set paths.rasters= sample-osm -o empty.jsonl");
  CHECK(r.code == 0);
  CHECK(read_manifest(w.dir.path() / "empty.jsonl").records.empty());

  r = forge(w.dir.path(), "-c world.ini --set paths.rules=no_rules.txt sample-osm");
  CHECK(r.code != 0);
  CHECK(r.err.find("no_rules.txt") != std::string::npos);
}

TEST_CASE("rebalance end to end") {
  World w;
  REQUIRE(forge(w.dir.path(), "-c world.ini sample-natural").code == 0);
  REQUIRE(forge(w.dir.path(), "-c world.ini sample-osm").code == 0);
  auto r = forge(w.dir.path(), "-c world.ini rebalance");
  REQUIRE(r.code == 0);
  const auto m = read_manifest(w.dir.path() / "out" / "balanced.jsonl");
  // n_k = 3 natural per class, n_k' = floor(3 * 9 / 22) = 1 man-made.
  CHECK(m.records.size() == 29);
  CHECK(m.count("Forest") == 3);
  CHECK(m.count("Airport") == 1);
  CHECK(m.count("Parking") == 1);
  CHECK(m.shortfall.at("Bridge") == 1);
  CHECK(r.err.find("n_k = 3, n_k' = 1") != std::string::npos);

  const auto first = testing::read_bytes(w.dir.path() / "out" / "balanced.jsonl");
  REQUIRE(forge(w.dir.path(), "-c world.ini rebalance").code == 0);
  CHECK(testing::read_bytes(w.dir.path() / "out" / "balanced.jsonl") == first);

  r = forge(w.dir.path(), "-c world.ini rebalance -i out/manmade.jsonl");
  CHECK(r.code == 1);
  CHECK(r.err.find("EmptyNaturalClass") != std::string::npos);
  r = forge(w.dir.path(), "-c world.ini rebalance -i out/natural.jsonl -i out/natural.jsonl");
  CHECK(r.code == 1);
  CHECK(r.err.find("TaxonomyOverlap") != std::string::npos);
  r = forge(w.dir.path(), "-c world.ini rebalance -i nothing.jsonl");
  CHECK(r.code == 1);
  CHECK(r.err.find("nothing.jsonl") != std::string::npos);
}

TEST_CASE("pretrain, resume and probe") {
  World w;
  const auto& root = w.dir.path();
  for (const char* cmd : {"sample-natural", "sample-osm", "rebalance"}) REQUIRE(forge(root, std::string("-c world.ini ") + cmd).code == 0);

  auto r = forge(root, "-c world.ini pretrain --stage both");
  REQUIRE(r.code == 0);
  const auto s1 = ssl::load_checkpoint(root / "out" / "stage1.tov");
  const auto s2 = ssl::load_checkpoint(root / "out" / "stage2.tov");
  CHECK(s1.epoch == 2);
  CHECK(s2.epoch == 2);
  CHECK(s2.model.encoder.frozen_mask == std::vector<bool>{true, true, false});
  CHECK(s2.model.encoder.layers[0] == s1.model.encoder.layers[0]);
  CHECK(s2.model.encoder.layers[1] == s1.model.encoder.layers[1]);
  CHECK_FALSE(s2.model.encoder.layers[2] == s1.model.encoder.layers[2]);

  // Interrupted after one epoch of each stage, then resumed.
  r = forge(root, "-c world.ini --set paths.output=cut pretrain --stage 1 --stop-after-epochs 1");
  REQUIRE(r.code == 0);
  CHECK(ssl::load_checkpoint(root / "cut" / "stage1.tov").epoch == 1);
  fs::copy_file(root / "out" / "balanced.jsonl", root / "cut" / "balanced.jsonl");
  REQUIRE(forge(root, "-c world.ini --set paths.output=cut pretrain --stage 1 --resume").code == 0);
  REQUIRE(forge(root, "-c world.ini --set paths.output=cut pretrain --stage 2 --stop-after-epochs 1").code == 0);
  REQUIRE(forge(root, "-c world.ini --set paths.output=cut pretrain --stage 2 --resume").code == 0);
  CHECK(testing::read_bytes(root / "cut" / "stage1.tov") == testing::read_bytes(root / "out" / "stage1.tov"));
  CHECK(testing::read_bytes(root / "cut" / "stage2.tov") == testing::read_bytes(root / "out" / "stage2.tov"));

  // The worker count never changes results.
  r = forge(root, "-c world.ini --set paths.output=threads pretrain --stage 1", "TOV_FORGE_THREADS=3");
  REQUIRE(r.code == 0);
  CHECK(testing::read_bytes(root / "threads" / "stage1.tov") == testing::read_bytes(root / "out" / "stage1.tov"));
  r = forge(root, "-c world.ini --set paths.output=threads pretrain --stage 1", "TOV_FORGE_THREADS=0");
  CHECK(r.code == 1);
  CHECK(r.err.find("TOV_FORGE_THREADS") != std::string::npos);

  r = forge(root, "-c world.ini --set paths.output=fresh pretrain --stage 2");
  CHECK(r.code == 1);
  CHECK(r.err.find("MissingCheckpoint") != std::string::npos);

  r = forge(root, "-c world.ini probe --random");
  REQUIRE(r.code == 0);
  std::istringstream csv(testing::read_bytes(root / "out" / "report.csv"));
  std::string line;
  int rows = 0;
  std::getline(csv, line);
  CHECK(line == "init,shots,seed,oa");
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 1 * 1 * 2);
  CHECK(r.out.find("random") != std::string::npos);

  r = forge(root, "-c world.ini probe --checkpoint out/stage1.tov --checkpoint two=out/stage2.tov --shots 1 --shots 3");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("stage1") != std::string::npos);
  CHECK(r.out.find("two") != std::string::npos);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 2 * 2);

  r = forge(root, "-c world.ini probe --checkpoint gone.tov");
  CHECK(r.code == 1);
  CHECK(r.err.find("gone.tov") != std::string::npos);
  r = forge(root, "-c world.ini probe --random --shots 7");
  CHECK(r.code == 1);
  CHECK(r.err.find("InsufficientShots") != std::string::npos);
}

TEST_CASE("gradcheck command") {
  testing::TempDir dir("cli_grad");
  std::ofstream(dir.path() / "g.ini") << "[model]\nchannels = 3, 4\nd_h = 5\nd_z = 3\n";
  auto r = forge(dir.path(), "-c g.ini gradcheck");
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(r.out.find("head.fc2.weight") != std::string::npos);
  r = forge(dir.path(), "-c g.ini gradcheck --corrupt");
  CHECK(r.code == 1);
  CHECK(r.out.find("FAIL") != std::string::npos);
  r = forge(dir.path(), "-c g.ini --set model.channels= gradcheck");
  CHECK(r.code == 1);
  CHECK(r.err.find("InvalidConfig") != std::string::npos);
}
