// tov_forge: sampling, rebalancing, two-stage pretraining and probing from
// one INI config. Data goes to files and stdout, diagnostics to stderr.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "config.hpp"
#include "tov/error.hpp"
#include "tov/geo_raster.hpp"
#include "tov/natural_sampler.hpp"
#include "tov/osm_sampler.hpp"
#include "tov/probe.hpp"
#include "tov/resampler.hpp"
#include "tov/train.hpp"

#ifndef TOV_VERSION
#define TOV_VERSION "0.0.0"
#endif

namespace forge {
namespace {

using tov::Errc;
using tov::Error;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

PipelineConfig load(const Common& common) { return load_config(common.config, common.overrides); }

void require_file(const fs::path& p, const std::string& key) {
  if (p.empty()) throw Error(Errc::InvalidConfig, key + " is not set");
  if (!fs::exists(p)) throw Error(Errc::Io, key + " not found: " + p.string());
}

void prepare_output(const PipelineConfig& cfg) {
  fs::create_directories(cfg.paths.output);
  write_config(cfg.paths.output / "config.ini", cfg);
}

void print_counts(const tov::DatasetManifest& m) {
  const auto counts = m.counts();
  for (std::size_t c = 0; c < counts.size(); ++c) std::cout << m.taxonomy.at(int(c)).name << '\t' << counts[c] << '\n';
  std::cout << "total\t" << m.records.size() << '\n';
}

int cmd_sample_natural(const Common& common, const fs::path& out_flag) {
  const auto cfg = load(common);
  tov::DatasetManifest m;
  m.id = "natural";
  m.taxonomy = tov::Taxonomy::standard_natural();
  if (!cfg.paths.rasters.empty()) {
    require_file(cfg.paths.landcover, "paths.landcover");
    for (const auto& id : cfg.paths.rasters) require_file(cfg.paths.image_root / id, "raster");
    const auto landcover = tov::geo::load_raster(cfg.paths.landcover);
    for (const auto& id : cfg.paths.rasters) {
      const auto image = tov::geo::load_raster(cfg.paths.image_root / id);
      auto samples = tov::natural::sample_natural(image, landcover, cfg.natural, id);
      std::cerr << id << ": " << samples.size() << " natural samples\n";
      m.records.insert(m.records.end(), samples.begin(), samples.end());
    }
  } else if (!cfg.paths.landcover.empty()) {
    require_file(cfg.paths.landcover, "paths.landcover");
  }
  prepare_output(cfg);
  const fs::path out = out_flag.empty() ? cfg.paths.output / "natural.jsonl" : out_flag;
  tov::write_manifest(out, m);
  print_counts(m);
  return 0;
}

int cmd_sample_osm(const Common& common, const fs::path& out_flag) {
  const auto cfg = load(common);
  tov::DatasetManifest m;
  m.id = "man-made";
  m.taxonomy = tov::Taxonomy::standard_man_made();
  require_file(cfg.paths.rules, "paths.rules");
  const auto rules = tov::osm::load_rule_table(cfg.paths.rules);
  if (!cfg.paths.rasters.empty()) {
    require_file(cfg.paths.osm, "paths.osm");
    for (const auto& id : cfg.paths.rasters) require_file(cfg.paths.image_root / id, "raster");
    const auto doc = tov::osm::load_osm(cfg.paths.osm);
    if (doc.skipped_unresolved) std::cerr << "skipped " << doc.skipped_unresolved << " ways with missing nodes\n";
    for (const auto& id : cfg.paths.rasters) {
      const auto image = tov::geo::load_raster(cfg.paths.image_root / id);
      auto samples = tov::osm::sample_manmade(image, doc, rules, cfg.window, id, cfg.time);
      std::cerr << id << ": " << samples.size() << " man-made samples\n";
      m.records.insert(m.records.end(), samples.begin(), samples.end());
    }
  }
  prepare_output(cfg);
  const fs::path out = out_flag.empty() ? cfg.paths.output / "manmade.jsonl" : out_flag;
  tov::write_manifest(out, m);
  print_counts(m);
  return 0;
}

int cmd_rebalance(const Common& common, std::vector<std::string> inputs, const fs::path& out_flag) {
  const auto cfg = load(common);
  if (inputs.empty()) {
    inputs = {(cfg.paths.output / "natural.jsonl").string(), (cfg.paths.output / "manmade.jsonl").string()};
  }
  if (inputs.size() > 2) throw Error(Errc::InvalidConfig, "rebalance takes one merged manifest or a natural and a man-made one");
  std::vector<tov::DatasetManifest> parts;
  for (const auto& in : inputs) {
    require_file(in, "input manifest");
    parts.push_back(tov::read_manifest(fs::path(in)));
  }
  const auto merged = parts.size() == 2 ? tov::merge_manifests(parts[0], parts[1]) : parts[0];
  const auto plan = tov::rebalance_plan(merged);
  auto balanced = tov::rebalance(merged, cfg.resample_seed);
  std::cerr << "n_k = " << plan.n_k << ", n_k' = " << plan.n_k_prime << '\n';
  if (!balanced.shortfall.empty()) {
    std::cerr << "shortfall in " << balanced.shortfall.size() << " man-made classes:";
    for (const auto& [name, missing] : balanced.shortfall) std::cerr << ' ' << name << " (" << missing << ')';
    std::cerr << '\n';
  }
  prepare_output(cfg);
  const fs::path out = out_flag.empty() ? cfg.paths.output / "balanced.jsonl" : out_flag;
  tov::write_manifest(out, balanced);
  print_counts(balanced);
  return 0;
}

struct PretrainFlags {
  std::string stage = "both";
  bool resume = false;
  std::optional<int> stop_after;
};

tov::ssl::TrainConfig train_config(const PipelineConfig& cfg, int epochs) {
  auto t = cfg.train;
  t.epochs = epochs;
  t.threads = resolve_threads(cfg);
  return t;
}

tov::ssl::RunOptions run_options(const fs::path& ckpt, const std::string& stage, int epochs,
                                 std::optional<int> stop_after) {
  tov::ssl::RunOptions opts;
  opts.stop_after_epochs = stop_after;
  opts.on_epoch = [ckpt, stage, epochs](const tov::ssl::TrainState& s) {
    tov::ssl::save_checkpoint(ckpt, s);
    std::cerr << stage << " epoch " << s.epoch << "/" << epochs << " loss " << std::setprecision(6)
              << s.epoch_losses.back() << '\n';
  };
  return opts;
}

// Continues from `ckpt` when resuming and it belongs to `stage`.
std::optional<tov::ssl::TrainState> resume_state(const fs::path& ckpt, const std::string& stage, bool resume) {
  if (!resume || !fs::exists(ckpt)) return std::nullopt;
  auto s = tov::ssl::load_checkpoint(ckpt);
  if (s.stage != stage) {
    throw Error(Errc::MalformedCheckpoint, ckpt.string() + " holds a " + s.stage + " run, not " + stage);
  }
  std::cerr << "resuming " << stage << " from epoch " << s.epoch << '\n';
  return s;
}

// Returns false when the run stopped early.
bool run_stage1(const PipelineConfig& cfg, const PretrainFlags& flags) {
  require_file(cfg.paths.general_corpus, "paths.general_corpus");
  const auto images = tov::ssl::load_image_corpus(cfg.paths.general_corpus);
  std::cerr << "stage1: " << images.size() << " images\n";
  const fs::path ckpt = cfg.paths.output / "stage1.tov";
  const auto tcfg = train_config(cfg, cfg.epochs_stage1);
  const auto opts = run_options(ckpt, "stage1", tcfg.epochs, flags.stop_after);
  tov::ssl::TrainState s;
  if (auto r = resume_state(ckpt, "stage1", flags.resume)) {
    s = tov::ssl::run_training(std::move(*r), images, tcfg, cfg.augment, opts);
  } else {
    s = tov::ssl::train_stage1(images, cfg.model, tcfg, cfg.augment, opts);
  }
  tov::ssl::save_checkpoint(ckpt, s);
  return s.epoch >= tcfg.epochs;
}

bool run_stage2(const PipelineConfig& cfg, const PretrainFlags& flags) {
  const fs::path init = cfg.paths.output / "stage1.tov";
  if (!fs::exists(init)) throw Error(Errc::MissingCheckpoint, "stage 2 needs a stage-1 checkpoint at " + init.string());
  require_file(cfg.paths.stage2_manifest, "paths.stage2_manifest");
  const auto manifest = tov::read_manifest(cfg.paths.stage2_manifest);
  const fs::path root = cfg.paths.image_root.empty() ? cfg.paths.stage2_manifest.parent_path() : cfg.paths.image_root;
  const auto images = tov::ssl::load_manifest_patches(manifest, root);
  std::cerr << "stage2: " << images.size() << " patches\n";
  const fs::path ckpt = cfg.paths.output / "stage2.tov";
  const auto tcfg = train_config(cfg, cfg.epochs_stage2);
  const auto opts = run_options(ckpt, "stage2", tcfg.epochs, flags.stop_after);
  auto state = resume_state(ckpt, "stage2", flags.resume);
  if (!state) {
    const auto stage1 = tov::ssl::load_checkpoint(init);
    state = tov::ssl::begin_stage2(stage1.model, tov::ssl::FreezeSpec::parse(cfg.freeze), tcfg.seed);
  }
  const auto s = tov::ssl::run_training(std::move(*state), images, tcfg, cfg.augment, opts);
  tov::ssl::save_checkpoint(ckpt, s);
  return s.epoch >= tcfg.epochs;
}

int cmd_pretrain(const Common& common, const PretrainFlags& flags) {
  const auto cfg = load(common);
  prepare_output(cfg);
  if (flags.stage == "1" || flags.stage == "both") {
    if (!run_stage1(cfg, flags)) {
      std::cerr << "stopped during stage 1; rerun with --resume to continue\n";
      return 0;
    }
  }
  if (flags.stage == "2" || flags.stage == "both") {
    if (!run_stage2(cfg, flags)) std::cerr << "stopped during stage 2; rerun with --resume to continue\n";
  }
  return 0;
}

tov::probe::ProbeDataset probe_dataset(const PipelineConfig& cfg, std::vector<std::string>& class_names) {
  tov::probe::ProbeDataset data;
  data.side = cfg.probe.side;
  if (!cfg.paths.probe_dir.empty()) {
    require_file(cfg.paths.probe_dir, "paths.probe_dir");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(cfg.paths.probe_dir))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      auto imgs = tov::ssl::load_image_corpus(d);
      if (imgs.empty()) continue;
      class_names.push_back(d.filename().string());
      for (auto& img : imgs) {
        data.images.push_back(std::move(img));
        data.labels.push_back(int(class_names.size()) - 1);
      }
    }
  } else if (!cfg.paths.probe_manifest.empty()) {
    require_file(cfg.paths.probe_manifest, "paths.probe_manifest");
    const auto m = tov::read_manifest(cfg.paths.probe_manifest);
    const fs::path root = cfg.paths.image_root.empty() ? cfg.paths.probe_manifest.parent_path() : cfg.paths.image_root;
    data.images = tov::ssl::load_manifest_patches(m, root);
    // Classes that actually occur, in taxonomy order.
    const auto counts = m.counts();
    std::map<std::string, int> index;
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c]) {
        index[m.taxonomy.at(int(c)).name] = int(class_names.size());
        class_names.push_back(m.taxonomy.at(int(c)).name);
      }
    for (const auto& r : m.records) data.labels.push_back(index.at(r.label));
  } else {
    throw Error(Errc::InvalidConfig, "probe needs paths.probe_dir or paths.probe_manifest");
  }
  data.num_classes = int(class_names.size());
  if (data.num_classes < 2) throw Error(Errc::InsufficientShots, "probe dataset has fewer than 2 classes");
  return data;
}

struct ProbeFlags {
  std::vector<std::string> checkpoints;  // name=path or path
  bool random = false;
  std::vector<int> shots;
};

int cmd_probe(const Common& common, const ProbeFlags& flags) {
  const auto cfg = load(common);
  std::vector<std::pair<std::string, fs::path>> ckpts;
  for (const auto& c : flags.checkpoints) {
    const auto eq = c.find('=');
    if (eq == std::string::npos) {
      ckpts.emplace_back(fs::path(c).stem().string(), c);
    } else {
      ckpts.emplace_back(c.substr(0, eq), c.substr(eq + 1));
    }
  }
  if (ckpts.empty() && !flags.random) {
    ckpts = {{"stage1", cfg.paths.output / "stage1.tov"}, {"stage2", cfg.paths.output / "stage2.tov"}};
  }
  std::vector<tov::probe::NamedEncoder> inits;
  if (flags.random) inits.push_back({"random", tov::ssl::init_model(cfg.model, cfg.train.seed).encoder});
  for (const auto& [name, path] : ckpts) {
    if (!fs::exists(path)) {
      throw Error(Errc::MissingCheckpoint, "checkpoint for '" + name + "' not found: " + path.string());
    }
    inits.push_back({name, tov::ssl::load_checkpoint(path).model.encoder});
  }

  std::vector<std::string> classes;
  const auto data = probe_dataset(cfg, classes);
  std::cerr << "probe: " << data.images.size() << " samples in " << classes.size() << " classes\n";
  const auto shots = flags.shots.empty() ? cfg.probe.shots : flags.shots;
  const auto rows =
      tov::probe::compare_inits(data, inits, shots, cfg.probe.seeds, cfg.probe.fit, resolve_threads(cfg));

  prepare_output(cfg);
  {
    std::ofstream csv(cfg.paths.output / "report.csv");
    tov::probe::write_report_csv(csv, rows);
    if (!csv) throw Error(Errc::Io, "cannot write " + (cfg.paths.output / "report.csv").string());
  }
  const auto summary = tov::probe::summarize(rows);
  {
    std::ofstream txt(cfg.paths.output / "summary.txt");
    tov::probe::write_summary(txt, summary);
  }
  tov::probe::write_summary(std::cout, summary);
  return 0;
}

struct GradcheckFlags {
  int samples = 2;
  bool corrupt = false;
};

int cmd_gradcheck(const Common& common, const GradcheckFlags& flags) {
  const auto cfg = load(common);
  const auto model = tov::ssl::init_model(cfg.model, cfg.train.seed);
  tov::ssl::GradcheckOptions opts;
  opts.samples = flags.samples;
  opts.seed = cfg.train.seed;
  opts.tau = cfg.train.tau;
  if (flags.corrupt) opts.corrupt = [](std::vector<tov::Tensor>& g) { g.front()[0] += 1e-2; };
  const auto report = tov::ssl::gradcheck(model, opts);
  std::cout << std::left << std::setw(18) << "parameter" << std::setw(9) << "checked" << std::setw(14) << "max rel err"
            << "result\n";
  for (const auto& e : report.entries) {
    std::cout << std::left << std::setw(18) << e.name << std::setw(9) << e.checked << std::setw(14) << std::scientific
              << std::setprecision(3) << e.max_rel_error << (e.pass ? "pass" : "FAIL") << '\n';
    std::cout.unsetf(std::ios::floatfield);
  }
  std::cout << (report.pass ? "PASS" : "FAIL") << " max relative error " << std::scientific << std::setprecision(3)
            << report.max_rel_error << " (tolerance " << opts.tolerance << ")\n";
  return report.pass ? 0 : 1;
}

}  // namespace
}  // namespace forge

int main(int argc, char** argv) {
  using namespace forge;
  CLI::App app{"tov_forge: geography-guided sampling and two-stage contrastive pretraining"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-c,--config", common.config, "INI config file");
  app.add_option("--set", common.overrides, "override a config value: section.key=value (repeatable)");

  fs::path out;
  auto* natural = app.add_subcommand("sample-natural", "sample natural scenes from rasters and land cover");
  natural->add_option("-o,--out", out, "manifest path (default <output>/natural.jsonl)");
  auto* osm = app.add_subcommand("sample-osm", "sample man-made scenes from rasters and OSM features");
  osm->add_option("-o,--out", out, "manifest path (default <output>/manmade.jsonl)");

  std::vector<std::string> inputs;
  auto* rebalance = app.add_subcommand("rebalance", "merge and class-balance manifests");
  rebalance->add_option("-i,--in", inputs, "input manifests (default the two sampled ones)");
  rebalance->add_option("-o,--out", out, "manifest path (default <output>/balanced.jsonl)");

  PretrainFlags pre;
  auto* pretrain = app.add_subcommand("pretrain", "contrastive pretraining, stage 1, stage 2 or both");
  pretrain->add_option("--stage", pre.stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));
  pretrain->add_flag("--resume", pre.resume, "continue from the stage checkpoint in the output directory");
  pretrain->add_option("--stop-after-epochs", pre.stop_after, "stop once this many epochs are complete")
      ->check(CLI::NonNegativeNumber);

  ProbeFlags pf;
  auto* probe = app.add_subcommand("probe", "few-shot linear probes on frozen encoders");
  probe->add_option("--checkpoint", pf.checkpoints, "name=path or path (repeatable; default stage1 and stage2)");
  probe->add_flag("--random", pf.random, "add a randomly initialised encoder");
  probe->add_option("--shots", pf.shots, "labelled samples per class (repeatable; default from config)")
      ->check(CLI::PositiveNumber);

  GradcheckFlags gf;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
  grad->add_option("--samples", gf.samples, "samples per batch (two views each)")->check(CLI::Range(2, 64));
  grad->add_flag("--corrupt", gf.corrupt, "perturb one analytic gradient (self-test)")->group("");

  auto* version = app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*natural) return cmd_sample_natural(common, out);
    if (*osm) return cmd_sample_osm(common, out);
    if (*rebalance) return cmd_rebalance(common, inputs, out);
    if (*pretrain) return cmd_pretrain(common, pre);
    if (*probe) return cmd_probe(common, pf);
    if (*grad) return cmd_gradcheck(common, gf);
    if (*version) {
      std::cout << "tov_forge " << TOV_VERSION << '\n';
      return 0;
    }
  } catch (const tov::Error& e) {
    std::cerr << "tov_forge: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "tov_forge: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
