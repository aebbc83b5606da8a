#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tov/tensor.hpp"

namespace tov::ssl {

struct ModelSpec {
  int in_channels = 3;
  std::vector<int> channels{16, 32, 64};  // one entry per conv block
  int d_h = 64;                           // embedding (feature) size
  int d_z = 32;                           // projection size
  // Pixels enter the first conv as (x - input_mean) / input_std.
  double input_mean = 0.5;
  double input_std = 0.25;

  int blocks() const { return static_cast<int>(channels.size()); }
  /// Throws InvalidConfig.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct Layer {
  std::string name;
  Tensor weight;
  Tensor bias;
  bool operator==(const Layer&) const = default;
};

/// f: B blocks of conv3x3 + bias + ReLU + 2x2 average pool, global average
/// pool, linear embed. Layers are the blocks followed by the embed layer.
struct EncoderState {
  ModelSpec spec;
  std::vector<Layer> layers;      // B conv layers, then embed
  std::vector<bool> frozen_mask;  // one flag per layer
  bool operator==(const EncoderState&) const = default;
};

/// g: linear, ReLU, linear.
struct ProjectionHead {
  Layer fc1;
  Layer fc2;
  bool frozen = false;
  bool operator==(const ProjectionHead&) const = default;
};

struct Model {
  EncoderState encoder;
  ProjectionHead head;

  /// Weight and bias tensors in declaration order: per encoder layer, then head.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  /// Per parameter tensor: true when its layer (or the head) is frozen.
  std::vector<bool> frozen_parameters() const;
  bool operator==(const Model&) const = default;
};

/// He-normal weights, zero biases. Deterministic in `seed`.
Model init_model(const ModelSpec& spec, std::uint64_t seed);

/// Activations kept for the backward pass, one entry per sample.
struct SampleCache {
  std::vector<std::size_t> side;  // input side per block
  std::vector<std::vector<double>> cols;  // im2col of each block input
  std::vector<std::vector<double>> pre;   // conv output before ReLU
  std::vector<double> pooled;             // global average pool
  std::vector<double> h, a1, z;
};

struct ForwardResult {
  Tensor h;  // (n, d_h)
  Tensor z;  // (n, d_z)
  std::vector<SampleCache> cache;
};

/// batch: (n, C, S, S) with S divisible by 2^B. Throws ShapeMismatch and
/// NonFiniteActivation. `threads` only changes speed, never results.
ForwardResult forward(const Model& model, const Tensor& batch, int threads = 1);

/// Encoder only; no caches kept.
Tensor encode(const EncoderState& encoder, const Tensor& batch, int threads = 1);

/// Gradients w.r.t. every parameter (same order as Model::parameters()).
/// Frozen layers get zero gradients and are skipped when nothing below them
/// needs one.
std::vector<Tensor> backward(const Model& model, const ForwardResult& fwd, const Tensor& dz, int threads = 1);

/// Which encoder layers to freeze: "none", "all", "auto" (first ceil(2B/3)
/// blocks), a count "k" (first k layers), or an explicit mask "1,1,0,0".
struct FreezeSpec {
  enum class Mode { None, All, Auto, Count, Mask } mode = Mode::Auto;
  int count = 0;
  std::vector<bool> mask;

  static FreezeSpec parse(const std::string& text);
  /// Mask over the B + 1 encoder layers. Throws InvalidFreezeSpec for a
  /// non-prefix mask, a wrong mask length or a count outside [0, B + 1].
  std::vector<bool> resolve(int blocks) const;
  std::string to_string() const;
};

}  // namespace tov::ssl
