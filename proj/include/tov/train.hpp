#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tov/augment.hpp"
#include "tov/model.hpp"
#include "tov/resampler.hpp"

namespace tov::ssl {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  double tau = 0.5;
  int batch_size = 64;
  double base_lr = 1e-3;
  int epochs = 50;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;  // sgd only
  double weight_decay = 0.0;
  int threads = 1;  // speed only; results do not depend on it

  /// Throws InvalidConfig.
  void validate() const;
};

/// Cosine annealing from base_lr at step 0 to 0 at step total_steps - 1.
double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total_steps);

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // first moment (adam) or velocity (sgd)
  std::vector<Tensor> v;  // second moment (adam)
  bool operator==(const OptimizerState&) const = default;
};

/// Applies one update to every non-frozen parameter. Frozen tensors and their
/// optimizer state are left untouched.
void apply_update(Model& model, OptimizerState& opt, const std::vector<Tensor>& grads, const TrainConfig& cfg,
                  double lr);

/// Forward, loss, backward and update on a batch of 2n views (rows 2i, 2i+1
/// pair up). Returns the loss before the update.
double train_step(Model& model, OptimizerState& opt, const Tensor& views, const TrainConfig& cfg, double lr);

/// Everything needed to continue a run.
struct TrainState {
  Model model;
  OptimizerState optimizer;
  int epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  std::string stage;
  std::vector<double> epoch_losses;  // mean loss per completed epoch
  bool operator==(const TrainState&) const = default;
};

struct RunOptions {
  /// Called after every completed epoch (e.g. to write a checkpoint).
  std::function<void(const TrainState&)> on_epoch;
  /// Stop after this many completed epochs in total, as if interrupted.
  std::optional<int> stop_after_epochs;
};

/// Trains `state` on `images` until cfg.epochs epochs are complete. Each
/// epoch's batch order and augmentations are derived from (seed, epoch), so a
/// resumed run matches an uninterrupted one bit for bit.
/// Throws InsufficientData when there are fewer images than batch_size.
TrainState run_training(TrainState state, const std::vector<Image>& images, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const RunOptions& opts = {});

/// Stage 1: random init, all layers trainable, general corpus.
TrainState train_stage1(const std::vector<Image>& images, const ModelSpec& spec, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const RunOptions& opts = {});
TrainState train_stage1(const std::filesystem::path& corpus_dir, const ModelSpec& spec, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const RunOptions& opts = {});

/// Stage 2: continues from a stage-1 model with the freeze_spec prefix frozen,
/// fresh optimizer state and schedule.
TrainState begin_stage2(const Model& stage1, const FreezeSpec& freeze, std::uint64_t seed);
TrainState train_stage2(const Model& stage1, const std::vector<Image>& images, const TrainConfig& cfg,
                        const AugmentationSpec& aug, const FreezeSpec& freeze, const RunOptions& opts = {});

// Checkpoint: "TOV1", u64 LE header length, JSON header, then the parameter
// tensors and optimizer moments as 64-bit LE reals in declaration order.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
/// Throws MissingCheckpoint and MalformedCheckpoint.
TrainState load_checkpoint(const std::filesystem::path& path);

/// 8-bit raster to a (3, H, W) image in [0, 1]; single-band rasters are
/// replicated.
Image to_image(const geo::GeoRaster& raster);
/// Every .png/.pgm/.ppm/.pnm below `dir`, in lexicographic path order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);
std::vector<Image> load_image_corpus(const std::filesystem::path& dir);
/// Pixels of each manifest record; images are `image_root / record.image_id`.
std::vector<Image> load_manifest_patches(const DatasetManifest& manifest, const std::filesystem::path& image_root);

struct GradcheckOptions {
  double eps = 1e-6;
  double tolerance = 1e-5;
  double denominator_floor = 1e-4;  // relative error uses max(|a|, |n|, floor)
  double kink_margin = 1e-4;        // redraw inputs with a ReLU input closer to 0
  int side = 8;
  int samples = 2;
  double tau = 0.5;
  std::uint64_t seed = 0;
  /// Test hook: alters the analytic gradients before they are compared.
  std::function<void(std::vector<Tensor>&)> corrupt;
};

struct GradcheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;  // one per parameter tensor
  double max_rel_error = 0.0;
  int redraws = 0;
  bool pass = true;
};

/// Central finite differences of the full loss (encoder, head, nt_xent)
/// against the analytic gradient, for every parameter of `model`.
GradcheckReport gradcheck(const Model& model, const GradcheckOptions& opts = {});

}  // namespace tov::ssl
