#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "tov/augment.hpp"
#include "tov/model.hpp"
#include "tov/natural_sampler.hpp"
#include "tov/osm_sampler.hpp"
#include "tov/probe.hpp"
#include "tov/train.hpp"

namespace forge {

namespace fs = std::filesystem;

struct Paths {
  fs::path image_root;
  std::vector<std::string> rasters;  // relative to image_root; also the manifest image ids
  fs::path landcover;
  fs::path osm;
  fs::path rules;
  fs::path general_corpus;
  fs::path stage2_manifest;
  fs::path probe_manifest;
  fs::path probe_dir;
  fs::path output;
};

struct ProbeSettings {
  std::vector<int> shots{5};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  tov::probe::ProbeConfig fit;
  int side = 32;
};

struct PipelineConfig {
  Paths paths;
  tov::natural::NaturalParams natural;
  tov::osm::WindowParams window;
  tov::osm::TimeFilter time;
  std::uint64_t resample_seed = 0;
  tov::ssl::ModelSpec model;
  tov::ssl::TrainConfig train;
  int epochs_stage1 = 50;
  int epochs_stage2 = 50;
  std::string freeze = "auto";
  tov::ssl::AugmentationSpec augment;
  ProbeSettings probe;
  int threads = 0;  // 0: all cores

  /// Effective key = value document, written into output directories.
  boost::property_tree::ptree tree;
};

/// Reads an INI file (or an empty document when `path` is empty), applies
/// "section.key=value" overrides, checks every key is known and every value
/// parses. Relative paths resolve against the config file's directory.
/// Throws tov::Error(InvalidConfig) or tov::Error(Io).
PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides);

/// Writes the effective configuration as INI.
void write_config(const fs::path& path, const PipelineConfig& cfg);

/// TOV_FORGE_THREADS, else the config value, else the core count.
int resolve_threads(const PipelineConfig& cfg);

}  // namespace forge
