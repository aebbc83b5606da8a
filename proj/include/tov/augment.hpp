#pragma once

#include <cstdint>
#include <utility>

#include "tov/detail/rng.hpp"
#include "tov/tensor.hpp"

namespace tov::ssl {

struct AugmentationSpec {
  double crop_scale_min = 0.25;  // fraction of image area
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double jitter_prob = 0.8;
  double brightness = 0.4;  // additive shift drawn from [-b, b]
  double contrast = 0.4;    // scale about the mean drawn from [1-c, 1+c]
  double saturation = 0.4;  // independent per-channel gain from [1-s, 1+s]
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 1.5;
  int out_side = 32;

  /// Throws InvalidConfig.
  void validate() const;
};

/// (C, H, W) image with values in [0, 1].
using Image = Tensor;

/// Bilinear resize (half-pixel centres, clamped borders). Same size returns the input.
Image resize_bilinear(const Image& img, int out_h, int out_w);

/// Largest centred square, resized to side x side.
Image center_resize(const Image& img, int side);

/// One draw of crop, resize, flip, colour jitter, blur.
Image augment(const Image& img, const AugmentationSpec& spec, detail::Rng& rng);

/// Two independent draws. Throws ImageTooSmall when either image side is
/// below spec.out_side.
std::pair<Image, Image> augment_pair(const Image& img, const AugmentationSpec& spec, detail::Rng& rng);

}  // namespace tov::ssl
