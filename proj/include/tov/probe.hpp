#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tov/augment.hpp"
#include "tov/model.hpp"

namespace tov::probe {

/// h = f(x) per image after a centred square crop resized to `side`.
/// No augmentation; rows do not depend on how images are batched.
/// Throws ShapeMismatch.
Tensor extract_features(const ssl::EncoderState& encoder, const std::vector<ssl::Image>& images, int side,
                        int threads = 1);

struct ProbeConfig {
  int steps = 2000;
  double weight_decay = 1e-4;
};

/// Softmax-linear classifier on standardised features.
struct LinearProbe {
  int num_classes = 0;
  std::vector<double> mean, scale;  // feature standardisation
  Tensor weight;                    // (K, d)
  Tensor bias;                      // (K)
  std::vector<double> loss_history;  // full-batch loss before each step, then the final loss

  std::vector<int> predict(const Tensor& features) const;
  bool operator==(const LinearProbe&) const = default;
};

/// Full-batch gradient descent on mean cross entropy + weight_decay/2 |W|^2.
/// The step is 1/L for an upper bound L of the loss curvature, so the loss
/// never increases.
LinearProbe fit_linear(const Tensor& features, const std::vector<int>& labels, int num_classes,
                       const ProbeConfig& cfg = {});

struct ShotSplit {
  std::vector<std::size_t> shots;  // training rows
  std::vector<std::size_t> eval;   // every other row, ascending
};

/// Exactly n_per_class seeded draws per class. Throws InsufficientShots.
ShotSplit draw_shots(const std::vector<int>& labels, int num_classes, int n_per_class, std::uint64_t seed);

struct ProbeFit {
  LinearProbe probe;
  ShotSplit split;
};

ProbeFit fit_probe(const Tensor& features, const std::vector<int>& labels, int num_classes, int n_per_class,
                   const ProbeConfig& cfg, std::uint64_t seed);

/// correct / total. Throws LengthMismatch and Empty.
double overall_accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

struct ProbeResult {
  double oa = 0.0;
  std::vector<double> per_class_acc;
  int n_per_class = 0;
  std::uint64_t seed = 0;
};

/// Fits on n_per_class shots per class and evaluates on all remaining rows.
ProbeResult run_probe(const Tensor& features, const std::vector<int>& labels, int num_classes, int n_per_class,
                      const ProbeConfig& cfg, std::uint64_t seed);

struct ReportRow {
  std::string init;
  int shots = 0;
  std::uint64_t seed = 0;
  double oa = 0.0;
};

struct NamedEncoder {
  std::string name;
  ssl::EncoderState encoder;
};

struct NamedCheckpoint {
  std::string name;
  std::filesystem::path checkpoint;
};

struct ProbeDataset {
  std::vector<ssl::Image> images;
  std::vector<int> labels;
  int num_classes = 0;
  int side = 32;
};

/// One row per (init, shots, seed), in that nesting order.
std::vector<ReportRow> compare_inits(const ProbeDataset& data, const std::vector<NamedEncoder>& inits,
                                     const std::vector<int>& shots, const std::vector<std::uint64_t>& seeds,
                                     const ProbeConfig& cfg = {}, int threads = 1);
/// Throws MissingCheckpoint when a checkpoint file is absent.
std::vector<ReportRow> compare_inits(const ProbeDataset& data, const std::vector<NamedCheckpoint>& inits,
                                     const std::vector<int>& shots, const std::vector<std::uint64_t>& seeds,
                                     const ProbeConfig& cfg = {}, int threads = 1);

/// CSV with header init,shots,seed,oa.
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);
/// Mean and sample standard deviation of OA per (init, shots), in first-seen order.
struct Summary {
  std::string init;
  int shots = 0;
  std::size_t runs = 0;
  double mean = 0.0;
  double stddev = 0.0;
};
std::vector<Summary> summarize(const std::vector<ReportRow>& rows);
void write_summary(std::ostream& out, const std::vector<Summary>& summary);

}  // namespace tov::probe
