#include "tov/augment.hpp"

#include <algorithm>
#include <cmath>

#include "tov/error.hpp"

namespace tov::ssl {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::InvalidConfig, "augmentation: " + what);
}

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

Image crop(const Image& img, int r0, int c0, int h, int w) {
  const std::size_t C = img.dim(0), W = img.dim(2);
  Image out({C, std::size_t(h), std::size_t(w)});
  for (std::size_t c = 0; c < C; ++c)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) out[(c * h + r) * w + q] = img[(c * img.dim(1) + r0 + r) * W + c0 + q];
  return out;
}

void flip(Image& img, bool horizontal) {
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  for (std::size_t c = 0; c < C; ++c) {
    double* p = img.data() + c * H * W;
    if (horizontal) {
      for (std::size_t r = 0; r < H; ++r) std::reverse(p + r * W, p + (r + 1) * W);
    } else {
      for (std::size_t r = 0; r < H / 2; ++r) std::swap_ranges(p + r * W, p + (r + 1) * W, p + (H - 1 - r) * W);
    }
  }
}

void blur(Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;

  const int C = int(img.dim(0)), H = int(img.dim(1)), W = int(img.dim(2));
  std::vector<double> tmp(img.size());
  for (int c = 0; c < C; ++c)
    for (int r = 0; r < H; ++r)
      for (int q = 0; q < W; ++q) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img[(c * H + r) * W + std::clamp(q + i, 0, W - 1)];
        tmp[(c * H + r) * W + q] = acc;
      }
  for (int c = 0; c < C; ++c)
    for (int r = 0; r < H; ++r)
      for (int q = 0; q < W; ++q) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[(c * H + std::clamp(r + i, 0, H - 1)) * W + q];
        img[(c * H + r) * W + q] = acc;
      }
}

void jitter(Image& img, const AugmentationSpec& spec, detail::Rng& rng) {
  const std::size_t C = img.dim(0), plane = img.dim(1) * img.dim(2);
  if (spec.brightness > 0.0) {
    const double shift = rng.uniform(-spec.brightness, spec.brightness);
    for (auto& v : img.values()) v += shift;
  }
  if (spec.contrast > 0.0) {
    const double factor = rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast);
    double mean = 0.0;
    for (double v : img.values()) mean += v;
    mean /= double(img.size());
    for (auto& v : img.values()) v = mean + factor * (v - mean);
  }
  if (spec.saturation > 0.0) {
    for (std::size_t c = 0; c < C; ++c) {
      const double gain = rng.uniform(1.0 - spec.saturation, 1.0 + spec.saturation);
      for (std::size_t i = 0; i < plane; ++i) img[c * plane + i] *= gain;
    }
  }
}

}  // namespace

void AugmentationSpec::validate() const {
  require(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0,
          "crop scale must satisfy 0 < min <= max <= 1");
  require(crop_ratio_min > 0.0 && crop_ratio_min <= crop_ratio_max, "crop ratio must satisfy 0 < min <= max");
  require(is_prob(hflip_prob) && is_prob(vflip_prob) && is_prob(jitter_prob) && is_prob(blur_prob),
          "probabilities must lie in [0, 1]");
  require(brightness >= 0.0 && contrast >= 0.0 && contrast <= 1.0 && saturation >= 0.0 && saturation <= 1.0,
          "jitter strengths out of range");
  require(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max, "blur sigma range must be positive");
  require(out_side >= 8, "output side must be at least 8");
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  const int C = int(img.dim(0)), H = int(img.dim(1)), W = int(img.dim(2));
  if (H == out_h && W == out_w) return img;
  Image out({std::size_t(C), std::size_t(out_h), std::size_t(out_w)});
  const double sy = double(H) / out_h, sx = double(W) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, double(H - 1));
    const int y0 = int(y), y1 = std::min(y0 + 1, H - 1);
    const double fy = y - y0;
    for (int q = 0; q < out_w; ++q) {
      const double x = std::clamp((q + 0.5) * sx - 0.5, 0.0, double(W - 1));
      const int x0 = int(x), x1 = std::min(x0 + 1, W - 1);
      const double fx = x - x0;
      for (int c = 0; c < C; ++c) {
        const double* p = img.data() + std::size_t(c) * H * W;
        const double top = p[y0 * W + x0] * (1 - fx) + p[y0 * W + x1] * fx;
        const double bot = p[y1 * W + x0] * (1 - fx) + p[y1 * W + x1] * fx;
        out[(std::size_t(c) * out_h + r) * out_w + q] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

Image center_resize(const Image& img, int side) {
  const int H = int(img.dim(1)), W = int(img.dim(2)), s = std::min(H, W);
  return resize_bilinear(crop(img, (H - s) / 2, (W - s) / 2, s, s), side, side);
}

Image augment(const Image& img, const AugmentationSpec& spec, detail::Rng& rng) {
  const int H = int(img.dim(1)), W = int(img.dim(2));
  int ch = H, cw = W, r0 = 0, c0 = 0;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double area = rng.uniform(spec.crop_scale_min, spec.crop_scale_max) * H * W;
    const double ratio = std::exp(rng.uniform(std::log(spec.crop_ratio_min), std::log(spec.crop_ratio_max)));
    const int w = int(std::lround(std::sqrt(area * ratio)));
    const int h = int(std::lround(std::sqrt(area / ratio)));
    if (w >= 1 && h >= 1 && w <= W && h <= H) {
      ch = h, cw = w;
      r0 = int(rng.below(std::uint64_t(H - h + 1)));
      c0 = int(rng.below(std::uint64_t(W - w + 1)));
      found = true;
    }
  }
  if (!found) {  // centred square fallback
    ch = cw = std::min(H, W);
    r0 = (H - ch) / 2;
    c0 = (W - cw) / 2;
  }
  Image out = (ch == H && cw == W) ? img : crop(img, r0, c0, ch, cw);
  out = resize_bilinear(out, spec.out_side, spec.out_side);

  if (rng.bernoulli(spec.hflip_prob)) flip(out, true);
  if (rng.bernoulli(spec.vflip_prob)) flip(out, false);
  if (rng.bernoulli(spec.jitter_prob)) jitter(out, spec, rng);
  if (rng.bernoulli(spec.blur_prob)) blur(out, rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max));
  for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::pair<Image, Image> augment_pair(const Image& img, const AugmentationSpec& spec, detail::Rng& rng) {
  if (img.rank() != 3) throw Error(Errc::ShapeMismatch, "augment expects (C, H, W), got " + shape_string(img.shape()));
  if (int(img.dim(1)) < spec.out_side || int(img.dim(2)) < spec.out_side) {
    throw Error(Errc::ImageTooSmall, "image " + std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(1)) +
                                         " is smaller than the output side " + std::to_string(spec.out_side));
  }
  Image a = augment(img, spec, rng);
  Image b = augment(img, spec, rng);
  return {std::move(a), std::move(b)};
}

}  // namespace tov::ssl
