#include "config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>

#include "tov/detail/parallel.hpp"
#include "tov/error.hpp"

namespace forge {

namespace pt = boost::property_tree;
using tov::Errc;
using tov::Error;

namespace {

struct Key {
  const char* name;  // section.key
  const char* fallback;
};

// Every recognised key with its default, in the order they are written out.
const Key kKeys[] = {
    {"paths.image_root", ""},
    {"paths.rasters", ""},
    {"paths.landcover", ""},
    {"paths.osm", ""},
    {"paths.rules", ""},
    {"paths.general_corpus", ""},
    {"paths.stage2_manifest", ""},
    {"paths.probe_manifest", ""},
    {"paths.probe_dir", ""},
    {"paths.output", "out"},
    {"segmentation.k", "300"},
    {"segmentation.min_size", "50"},
    {"segmentation.sigma", "0.8"},
    {"sampling.threshold", "0.2"},
    {"sampling.min_side", "32"},
    {"sampling.max_side", "0"},
    {"sampling.max_dim", "1024"},
    {"sampling.sample_side", "64"},
    {"sampling.point_pad", "0.5"},
    {"sampling.area_pad", "0.1"},
    {"sampling.time_from", ""},
    {"sampling.time_to", ""},
    {"resampling.seed", "0"},
    {"model.channels", "16,32,64"},
    {"model.d_h", "64"},
    {"model.d_z", "32"},
    {"model.input_mean", "0.5"},
    {"model.input_std", "0.25"},
    {"training.tau", "0.5"},
    {"training.batch_size", "64"},
    {"training.base_lr", "0.001"},
    {"training.epochs_stage1", "50"},
    {"training.epochs_stage2", "50"},
    {"training.seed", "0"},
    {"training.optimizer", "adam"},
    {"training.beta1", "0.9"},
    {"training.beta2", "0.999"},
    {"training.eps", "1e-8"},
    {"training.momentum", "0.9"},
    {"training.weight_decay", "0"},
    {"training.freeze", "auto"},
    {"augment.crop_scale_min", "0.25"},
    {"augment.crop_scale_max", "1"},
    {"augment.crop_ratio_min", "0.75"},
    {"augment.crop_ratio_max", "1.3333333333333333"},
    {"augment.hflip_prob", "0.5"},
    {"augment.vflip_prob", "0.5"},
    {"augment.jitter_prob", "0.8"},
    {"augment.brightness", "0.4"},
    {"augment.contrast", "0.4"},
    {"augment.saturation", "0.4"},
    {"augment.blur_prob", "0.5"},
    {"augment.blur_sigma_min", "0.1"},
    {"augment.blur_sigma_max", "1.5"},
    {"augment.out_side", "32"},
    {"probe.shots", "5"},
    {"probe.seeds", "1,2,3,4,5"},
    {"probe.steps", "2000"},
    {"probe.weight_decay", "0.0001"},
    {"probe.side", "32"},
    {"runtime.threads", "0"},
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, const std::map<std::string, fs::path>& bases) : tree_(tree), bases_(bases) {}

  std::string text(const std::string& key) const { return tree_.get<std::string>(pt::ptree::path_type(key, '.')); }

  template <class T>
  T number(const std::string& key) const {
    const std::string s = text(key);
    T v{};
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) bad(key, s, "a number");
    return v;
  }

  template <class T>
  std::vector<T> numbers(const std::string& key) const {
    std::vector<T> out;
    for (const auto& item : split_list(text(key))) {
      T v{};
      const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc{} || end != item.data() + item.size()) bad(key, text(key), "a comma-separated number list");
      out.push_back(v);
    }
    return out;
  }

  fs::path path(const std::string& key) const {
    const std::string s = text(key);
    if (s.empty()) return {};
    fs::path p(s);
    if (p.is_relative()) {
      auto it = bases_.find(key);
      p = (it == bases_.end() ? fs::current_path() : it->second) / p;
    }
    return p.lexically_normal();
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& value, const std::string& want) {
    throw Error(Errc::InvalidConfig, "config key " + key + " = '" + value + "' is not " + want);
  }

 private:
  const pt::ptree& tree_;
  const std::map<std::string, fs::path>& bases_;
};

}  // namespace

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  pt::ptree file;
  fs::path base = fs::current_path();
  if (!path.empty()) {
    if (!fs::is_regular_file(path)) throw Error(Errc::Io, "config file not found: " + path.string());
    try {
      pt::read_ini(path.string(), file);
    } catch (const pt::ini_parser_error& e) {
      throw Error(Errc::InvalidConfig, "cannot parse config " + path.string() + ": " + e.message() + " (line " +
                                           std::to_string(e.line()) + ")");
    }
    base = fs::absolute(path).parent_path();
  }

  std::map<std::string, std::string> known;
  for (const auto& k : kKeys) known[k.name] = k.fallback;

  std::map<std::string, fs::path> bases;
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : file) {
    if (!body.data().empty()) throw Error(Errc::InvalidConfig, "config entry '" + section + "' is outside a [section]");
    for (const auto& [key, v] : body) {
      const std::string full = section + "." + key;
      if (!known.count(full)) throw Error(Errc::InvalidConfig, "unknown config key " + full);
      values[full] = trim(v.data());
      bases[full] = base;
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidConfig, "override '" + o + "' is not section.key=value");
    const std::string key = trim(o.substr(0, eq));
    if (!known.count(key)) throw Error(Errc::InvalidConfig, "unknown config key " + key);
    values[key] = trim(o.substr(eq + 1));
    bases[key] = fs::current_path();
  }

  PipelineConfig c;
  for (const auto& k : kKeys) {
    const auto it = values.find(k.name);
    c.tree.put(pt::ptree::path_type(k.name, '.'), it == values.end() ? std::string(k.fallback) : it->second);
  }
  const Reader r(c.tree, bases);

  auto& p = c.paths;
  p.image_root = r.path("paths.image_root");
  p.rasters = split_list(r.text("paths.rasters"));
  p.landcover = r.path("paths.landcover");
  p.osm = r.path("paths.osm");
  p.rules = r.path("paths.rules");
  if (p.rules.empty()) p.rules = tov::osm::default_rule_table_path();
  p.general_corpus = r.path("paths.general_corpus");
  p.stage2_manifest = r.path("paths.stage2_manifest");
  p.probe_manifest = r.path("paths.probe_manifest");
  p.probe_dir = r.path("paths.probe_dir");
  p.output = r.path("paths.output");
  if (p.output.empty()) throw Error(Errc::InvalidConfig, "paths.output must name a directory");
  if (!p.rasters.empty() && p.image_root.empty()) p.image_root = base;

  auto& seg = c.natural.search.segmentation;
  seg.k = r.number<double>("segmentation.k");
  seg.min_size = r.number<int>("segmentation.min_size");
  seg.sigma = r.number<double>("segmentation.sigma");
  if (!(seg.k > 0) || seg.min_size < 1 || seg.sigma < 0) {
    throw Error(Errc::InvalidConfig, "segmentation needs k > 0, min_size >= 1 and sigma >= 0");
  }

  c.natural.threshold = r.number<double>("sampling.threshold");
  if (!(c.natural.threshold > 0 && c.natural.threshold <= 1)) {
    throw Error(Errc::InvalidConfig, "sampling.threshold must lie in (0, 1]");
  }
  c.natural.search.min_side = r.number<int>("sampling.min_side");
  c.natural.search.max_side = r.number<int>("sampling.max_side");
  c.natural.search.max_dim = r.number<int>("sampling.max_dim");
  if (c.natural.search.min_side < 1 || c.natural.search.max_side < 0 || c.natural.search.max_dim < 0) {
    throw Error(Errc::InvalidConfig, "sampling.min_side must be positive, max_side and max_dim non-negative");
  }
  c.window.min_side = c.natural.search.min_side;
  c.window.sample_side = r.number<int>("sampling.sample_side");
  c.window.point_pad = r.number<double>("sampling.point_pad");
  c.window.area_pad = r.number<double>("sampling.area_pad");
  if (c.window.sample_side < 1 || c.window.point_pad < 0 || c.window.area_pad < 0) {
    throw Error(Errc::InvalidConfig, "sampling.sample_side must be positive and pads non-negative");
  }
  c.time.from = r.text("sampling.time_from");
  c.time.to = r.text("sampling.time_to");

  c.resample_seed = r.number<std::uint64_t>("resampling.seed");

  c.model.channels = r.numbers<int>("model.channels");
  c.model.d_h = r.number<int>("model.d_h");
  c.model.d_z = r.number<int>("model.d_z");
  c.model.input_mean = r.number<double>("model.input_mean");
  c.model.input_std = r.number<double>("model.input_std");

  auto& t = c.train;
  t.tau = r.number<double>("training.tau");
  t.batch_size = r.number<int>("training.batch_size");
  t.base_lr = r.number<double>("training.base_lr");
  c.epochs_stage1 = r.number<int>("training.epochs_stage1");
  c.epochs_stage2 = r.number<int>("training.epochs_stage2");
  t.seed = r.number<std::uint64_t>("training.seed");
  const std::string opt = r.text("training.optimizer");
  if (opt == "adam") {
    t.optimizer = tov::ssl::OptimizerKind::Adam;
  } else if (opt == "sgd") {
    t.optimizer = tov::ssl::OptimizerKind::Sgd;
  } else {
    Reader::bad("training.optimizer", opt, "adam or sgd");
  }
  t.beta1 = r.number<double>("training.beta1");
  t.beta2 = r.number<double>("training.beta2");
  t.eps = r.number<double>("training.eps");
  t.momentum = r.number<double>("training.momentum");
  t.weight_decay = r.number<double>("training.weight_decay");
  if (c.epochs_stage1 < 0 || c.epochs_stage2 < 0) throw Error(Errc::InvalidConfig, "epoch counts must be >= 0");
  c.freeze = r.text("training.freeze");
  tov::ssl::FreezeSpec::parse(c.freeze);

  auto& a = c.augment;
  a.crop_scale_min = r.number<double>("augment.crop_scale_min");
  a.crop_scale_max = r.number<double>("augment.crop_scale_max");
  a.crop_ratio_min = r.number<double>("augment.crop_ratio_min");
  a.crop_ratio_max = r.number<double>("augment.crop_ratio_max");
  a.hflip_prob = r.number<double>("augment.hflip_prob");
  a.vflip_prob = r.number<double>("augment.vflip_prob");
  a.jitter_prob = r.number<double>("augment.jitter_prob");
  a.brightness = r.number<double>("augment.brightness");
  a.contrast = r.number<double>("augment.contrast");
  a.saturation = r.number<double>("augment.saturation");
  a.blur_prob = r.number<double>("augment.blur_prob");
  a.blur_sigma_min = r.number<double>("augment.blur_sigma_min");
  a.blur_sigma_max = r.number<double>("augment.blur_sigma_max");
  a.out_side = r.number<int>("augment.out_side");

  c.probe.shots = r.numbers<int>("probe.shots");
  c.probe.seeds = r.numbers<std::uint64_t>("probe.seeds");
  c.probe.fit.steps = r.number<int>("probe.steps");
  c.probe.fit.weight_decay = r.number<double>("probe.weight_decay");
  c.probe.side = r.number<int>("probe.side");
  if (c.probe.shots.empty() || c.probe.seeds.empty()) throw Error(Errc::InvalidConfig, "probe.shots and probe.seeds must not be empty");
  for (int s : c.probe.shots)
    if (s < 1) throw Error(Errc::InvalidConfig, "probe.shots entries must be positive");
  if (c.probe.fit.steps < 0 || c.probe.fit.weight_decay < 0 || c.probe.side < 1) {
    throw Error(Errc::InvalidConfig, "probe.steps and probe.weight_decay must be >= 0, probe.side positive");
  }

  c.threads = r.number<int>("runtime.threads");
  if (c.threads < 0) throw Error(Errc::InvalidConfig, "runtime.threads must be >= 0");
  return c;
}

void write_config(const fs::path& path, const PipelineConfig& cfg) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  pt::write_ini(out, cfg.tree);
}

int resolve_threads(const PipelineConfig& cfg) {
  if (const char* env = std::getenv("TOV_FORGE_THREADS"); env && *env) {
    int n = 0;
    const std::string s(env);
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc{} || end != s.data() + s.size() || n < 1) {
      throw Error(Errc::InvalidConfig, "TOV_FORGE_THREADS='" + s + "' is not a positive integer");
    }
    return n;
  }
  return cfg.threads > 0 ? cfg.threads : tov::detail::hardware_threads();
}

}  // namespace forge
