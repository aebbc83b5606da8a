#include "tov/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "json.hpp"
#include "tov/contrastive.hpp"
#include "tov/detail/le_io.hpp"
#include "tov/detail/parallel.hpp"
#include "tov/error.hpp"

namespace tov::ssl {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::InvalidConfig, std::string("training: ") + what);
  };
  require(tau > 0.0, "tau must be positive");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(base_lr > 0.0 && std::isfinite(base_lr), "base_lr must be positive");
  require(epochs >= 0, "epochs must not be negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must lie in [0, 1)");
  require(eps > 0.0, "eps must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must not be negative");
  require(threads >= 1, "threads must be at least 1");
}

double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps <= 1) return base_lr;
  const double t = double(std::min(step, total_steps - 1)) / double(total_steps - 1);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void apply_update(Model& model, OptimizerState& opt, const std::vector<Tensor>& grads, const TrainConfig& cfg,
                  double lr) {
  auto params = model.parameters();
  const auto frozen = model.frozen_parameters();
  if (grads.size() != params.size()) throw Error(Errc::ShapeMismatch, "gradient count does not match parameters");
  if (opt.m.empty()) {
    for (const auto* p : params) opt.m.emplace_back(p->shape());
    if (cfg.optimizer == OptimizerKind::Adam)
      for (const auto* p : params) opt.v.emplace_back(p->shape());
  }
  if (opt.m.size() != params.size() || (cfg.optimizer == OptimizerKind::Adam && opt.v.size() != params.size())) {
    throw Error(Errc::ShapeMismatch, "optimizer state does not match the model");
  }
  ++opt.step;
  const double t = double(opt.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (frozen[k]) continue;
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    Tensor& m = opt.m[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + cfg.weight_decay * p[i];
      if (cfg.optimizer == OptimizerKind::Adam) {
        double& v = opt.v[k][i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * gi * gi;
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v / c2) + cfg.eps);
      } else {
        m[i] = cfg.momentum * m[i] + gi;
        p[i] -= lr * m[i];
      }
    }
  }
}

double train_step(Model& model, OptimizerState& opt, const Tensor& views, const TrainConfig& cfg, double lr) {
  const auto fwd = forward(model, views, cfg.threads);
  const auto loss = nt_xent(fwd.z, cfg.tau);
  const auto grads = backward(model, fwd, loss.grad, cfg.threads);
  apply_update(model, opt, grads, cfg, lr);
  return loss.loss;
}

TrainState run_training(TrainState state, const std::vector<Image>& images, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const RunOptions& opts) {
  cfg.validate();
  aug.validate();
  if (state.epoch >= cfg.epochs) return state;
  const std::size_t bs = cfg.batch_size;
  if (images.size() < bs) {
    throw Error(Errc::InsufficientData,
                std::to_string(images.size()) + " images for a batch size of " + std::to_string(bs));
  }
  const std::size_t channels = state.model.encoder.spec.in_channels, side = aug.out_side;
  for (const auto& img : images)
    if (img.rank() != 3 || img.dim(0) != channels) {
      throw Error(Errc::ShapeMismatch, "training image " + shape_string(img.shape()) + " does not have " +
                                           std::to_string(channels) + " channels");
    }
  const std::size_t steps = images.size() / bs;
  const std::uint64_t total = std::uint64_t(cfg.epochs) * steps;
  const std::size_t view_size = channels * side * side;

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    if (opts.stop_after_epochs && state.epoch >= *opts.stop_after_epochs) break;
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    detail::Rng::derive(state.seed, std::uint64_t(epoch), 0).shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      Tensor views({2 * bs, channels, side, side});
      detail::parallel_for(bs, cfg.threads, [&](std::size_t j) {
        auto rng = detail::Rng::derive(state.seed, std::uint64_t(epoch), 1 + k * bs + j);
        const auto [a, b] = augment_pair(images[order[k * bs + j]], aug, rng);
        std::copy(a.values().begin(), a.values().end(), views.data() + (2 * j) * view_size);
        std::copy(b.values().begin(), b.values().end(), views.data() + (2 * j + 1) * view_size);
      });
      const double lr = cosine_lr(cfg.base_lr, state.optimizer.step, total);
      loss_sum += train_step(state.model, state.optimizer, views, cfg, lr);
    }
    state.epoch_losses.push_back(loss_sum / double(steps));
    state.epoch = epoch + 1;
    if (opts.on_epoch) opts.on_epoch(state);
  }
  return state;
}

TrainState train_stage1(const std::vector<Image>& images, const ModelSpec& spec, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const RunOptions& opts) {
  TrainState s;
  s.model = init_model(spec, cfg.seed);
  s.seed = cfg.seed;
  s.stage = "stage1";
  return run_training(std::move(s), images, cfg, aug, opts);
}

TrainState train_stage1(const std::filesystem::path& corpus_dir, const ModelSpec& spec, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const RunOptions& opts) {
  return train_stage1(load_image_corpus(corpus_dir), spec, cfg, aug, opts);
}

TrainState begin_stage2(const Model& stage1, const FreezeSpec& freeze, std::uint64_t seed) {
  TrainState s;
  s.model = stage1;
  s.model.encoder.frozen_mask = freeze.resolve(stage1.encoder.spec.blocks());
  s.model.head.frozen = false;
  s.seed = seed;
  s.stage = "stage2";
  return s;
}

TrainState train_stage2(const Model& stage1, const std::vector<Image>& images, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const FreezeSpec& freeze, const RunOptions& opts) {
  return run_training(begin_stage2(stage1, freeze, cfg.seed), images, cfg, aug, opts);
}

namespace {

constexpr char kMagic[4] = {'T', 'O', 'V', '1'};
constexpr std::uint64_t kMaxHeader = 1 << 24;

void write_tensor(std::ostream& out, const Tensor& t) {
  for (double v : t.values()) detail::write_le(out, v);
}

void read_tensor(std::istream& in, Tensor& t, const std::filesystem::path& path) {
  for (auto& v : t.values())
    if (!detail::read_le(in, v)) throw Error(Errc::MalformedCheckpoint, path.string() + ": truncated data");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const auto& m = state.model;
  ordered_json h;
  h["format"] = "TOV1";
  h["version"] = 1;
  h["stage"] = state.stage;
  h["spec"] = {{"in_channels", m.encoder.spec.in_channels},
               {"channels", m.encoder.spec.channels},
               {"d_h", m.encoder.spec.d_h},
               {"d_z", m.encoder.spec.d_z},
               {"input_mean", m.encoder.spec.input_mean},
               {"input_std", m.encoder.spec.input_std}};
  auto& params = h["params"] = ordered_json::array();
  const auto names = m.parameter_names();
  const auto tensors = m.parameters();
  for (std::size_t i = 0; i < tensors.size(); ++i) params.push_back({{"name", names[i]}, {"shape", tensors[i]->shape()}});
  h["frozen_mask"] = m.encoder.frozen_mask;
  h["head_frozen"] = m.head.frozen;
  h["rng"] = {{"kind", "mt19937_64/derive(seed,epoch,index)"}, {"seed", state.seed}, {"epoch", state.epoch}};
  h["epoch"] = state.epoch;
  h["step"] = state.optimizer.step;
  h["moments"] = {{"m", !state.optimizer.m.empty()}, {"v", !state.optimizer.v.empty()}};
  h["epoch_losses"] = state.epoch_losses;
  const std::string header = h.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write checkpoint " + tmp.string());
    out.write(kMagic, 4);
    detail::write_le<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto* t : tensors) write_tensor(out, *t);
    for (const auto& t : state.optimizer.m) write_tensor(out, t);
    for (const auto& t : state.optimizer.v) write_tensor(out, t);
    if (!out) throw Error(Errc::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingCheckpoint, "cannot open checkpoint " + path.string());
  auto bad = [&](const std::string& what) { return Error(Errc::MalformedCheckpoint, path.string() + ": " + what); };

  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw bad("not a TOV1 checkpoint");
  std::uint64_t len = 0;
  if (!detail::read_le(in, len) || len > kMaxHeader) throw bad("bad header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw bad("truncated header");

  TrainState s;
  std::vector<std::pair<std::string, Shape>> listed;
  bool has_m = false, has_v = false;
  try {
    const auto h = ordered_json::parse(text);
    if (h.at("format") != "TOV1" || h.at("version") != 1) throw bad("unsupported format version");
    ModelSpec spec;
    spec.in_channels = h.at("spec").at("in_channels").get<int>();
    spec.channels = h.at("spec").at("channels").get<std::vector<int>>();
    spec.d_h = h.at("spec").at("d_h").get<int>();
    spec.d_z = h.at("spec").at("d_z").get<int>();
    spec.input_mean = h.at("spec").at("input_mean").get<double>();
    spec.input_std = h.at("spec").at("input_std").get<double>();
    spec.validate();
    s.model = init_model(spec, 0);
    s.model.encoder.frozen_mask = h.at("frozen_mask").get<std::vector<bool>>();
    s.model.head.frozen = h.at("head_frozen").get<bool>();
    s.stage = h.at("stage").get<std::string>();
    s.seed = h.at("rng").at("seed").get<std::uint64_t>();
    s.epoch = h.at("epoch").get<int>();
    s.optimizer.step = h.at("step").get<std::uint64_t>();
    s.epoch_losses = h.at("epoch_losses").get<std::vector<double>>();
    has_m = h.at("moments").at("m").get<bool>();
    has_v = h.at("moments").at("v").get<bool>();
    for (const auto& p : h.at("params")) listed.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
  } catch (const nlohmann::json::exception& e) {
    throw bad(std::string("bad header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::MalformedCheckpoint) throw;
    throw bad(e.what());
  }

  if (s.model.encoder.frozen_mask.size() != s.model.encoder.layers.size()) throw bad("frozen mask length");
  const auto names = s.model.parameter_names();
  auto tensors = s.model.parameters();
  if (listed.size() != tensors.size()) throw bad("parameter list does not match the model spec");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (listed[i].first != names[i] || listed[i].second != tensors[i]->shape()) {
      throw bad("parameter " + listed[i].first + " does not match the model spec");
    }
  }
  for (auto* t : tensors) read_tensor(in, *t, path);
  if (has_m)
    for (const auto* t : tensors) read_tensor(in, s.optimizer.m.emplace_back(t->shape()), path);
  if (has_v)
    for (const auto* t : tensors) read_tensor(in, s.optimizer.v.emplace_back(t->shape()), path);
  if (in.peek() != std::char_traits<char>::eof()) throw bad("trailing bytes");
  for (const auto* t : tensors)
    if (!t->all_finite()) throw bad("non-finite parameter");
  return s;
}

Image to_image(const geo::GeoRaster& raster) {
  const std::size_t H = raster.height(), W = raster.width(), bands = raster.bands();
  Image img({3, H, W});
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t band = bands >= 3 ? c : 0;
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t q = 0; q < W; ++q) img[(c * H + r) * W + q] = raster.data()[(r * W + q) * bands + band] / 255.0;
  }
  return img;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::Io, "image directory not found: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Image> load_image_corpus(const std::filesystem::path& dir) {
  std::vector<Image> out;
  for (const auto& p : list_images(dir)) out.push_back(to_image(geo::load_raster(p)));
  return out;
}

std::vector<Image> load_manifest_patches(const DatasetManifest& manifest, const std::filesystem::path& image_root) {
  std::map<std::string, geo::GeoRaster> rasters;
  std::vector<Image> out;
  out.reserve(manifest.records.size());
  for (const auto& s : manifest.records) {
    auto it = rasters.find(s.image_id);
    if (it == rasters.end()) {
      const auto path = image_root / s.image_id;
      if (!std::filesystem::exists(path)) throw Error(Errc::Io, "manifest image not found: " + path.string());
      it = rasters.emplace(s.image_id, geo::load_raster(path)).first;
    }
    out.push_back(to_image(it->second.window(s.window)));
  }
  return out;
}

GradcheckReport gradcheck(const Model& model, const GradcheckOptions& opts) {
  if (model.encoder.layers.empty()) throw Error(Errc::InvalidConfig, "gradcheck needs a model with parameters");
  Model m = model;
  std::fill(m.encoder.frozen_mask.begin(), m.encoder.frozen_mask.end(), false);
  m.head.frozen = false;

  const auto& spec = m.encoder.spec;
  const std::size_t factor = std::size_t{1} << spec.blocks();
  const std::size_t side = std::max<std::size_t>(factor, (std::size_t(opts.side) + factor - 1) / factor * factor);
  const std::size_t views = 2 * std::size_t(std::max(opts.samples, 2));
  detail::Rng rng(opts.seed);

  GradcheckReport report;
  Tensor batch;
  ForwardResult fwd;
  // Finite differences across a ReLU kink are meaningless; redraw the inputs
  // until every ReLU input is clear of zero.
  for (;; ++report.redraws) {
    if (report.redraws > 1000) throw Error(Errc::InvalidConfig, "gradcheck: no kink-free input found");
    batch = Tensor({views, std::size_t(spec.in_channels), side, side});
    for (auto& v : batch.values()) v = rng.uniform();
    fwd = forward(m, batch);
    double closest = INFINITY;
    for (const auto& c : fwd.cache) {
      for (const auto& pre : c.pre)
        for (double v : pre) closest = std::min(closest, std::abs(v));
      for (double v : c.a1) closest = std::min(closest, std::abs(v));
    }
    if (closest > opts.kink_margin) break;
  }

  const auto loss = nt_xent(fwd.z, opts.tau);
  auto analytic = backward(m, fwd, loss.grad);
  if (opts.corrupt) opts.corrupt(analytic);

  const auto names = m.parameter_names();
  auto params = m.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    GradcheckEntry e{names[k], 0, 0.0, true};
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + opts.eps;
      const double up = nt_xent(forward(m, batch).z, opts.tau).loss;
      p[i] = saved - opts.eps;
      const double down = nt_xent(forward(m, batch).z, opts.tau).loss;
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
      e.max_rel_error = std::max(e.max_rel_error, rel);
      ++e.checked;
    }
    e.pass = e.max_rel_error < opts.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
    report.pass = report.pass && e.pass;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace tov::ssl
