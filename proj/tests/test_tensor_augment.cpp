#include <cmath>

#include "test_util.hpp"
#include "tov/augment.hpp"
#include "tov/tensor.hpp"

using namespace tov;
using namespace tov::ssl;

namespace {

Image ramp_image(std::size_t c, std::size_t h, std::size_t w) {
  Image img({c, h, w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) img[(k * h + y) * w + x] = double(x + 2 * y + k) / double(w + 2 * h + c);
  return img;
}

AugmentationSpec identity_spec(int side) {
  AugmentationSpec s;
  s.crop_scale_min = s.crop_scale_max = 1.0;
  s.crop_ratio_min = s.crop_ratio_max = 1.0;
  s.hflip_prob = s.vflip_prob = 0.0;
  s.brightness = s.contrast = s.saturation = 0.0;
  s.blur_prob = 0.0;
  s.out_side = side;
  return s;
}

}  // namespace

TEST_CASE("tensor shape and value checks") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.dim(1) == 3);
  CHECK(shape_string(t.shape()) == "(2, 3)");
  CHECK_ERRC(Tensor({2, 2}, std::vector<double>(3)), Errc::ShapeMismatch);

  CHECK(t.all_finite());
  t[4] = NAN;
  CHECK_FALSE(t.all_finite());
  CHECK_ERRC(t.require_finite("test"), Errc::NonFiniteActivation);
  t[4] = INFINITY;
  CHECK_ERRC(t.require_finite("test"), Errc::NonFiniteActivation);
}

TEST_CASE("32-bit storage round trip") {
  Tensor t({4}, std::vector<double>{0.25, -1.0, 3.5, 1e-3});
  auto f = t.to_f32();
  REQUIRE(f.size() == 4);
  const Tensor back = Tensor::from_f32(t.shape(), f);
  CHECK(back[0] == 0.25);
  CHECK(back[2] == 3.5);
  CHECK(back[3] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK_ERRC(Tensor::from_f32({3}, f), Errc::ShapeMismatch);
}

TEST_CASE("resize keeps constants and same-size input") {
  const Image img = ramp_image(3, 16, 16);
  CHECK(resize_bilinear(img, 16, 16) == img);
  Image flat({3, 20, 12}, 0.4);
  const Image r = resize_bilinear(flat, 7, 9);
  CHECK(r.shape() == Shape{3, 7, 9});
  for (double v : r.values()) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));
  const Image c = center_resize(ramp_image(3, 20, 12), 8);
  CHECK(c.shape() == Shape{3, 8, 8});
}

TEST_CASE("downsampling by two averages pixel pairs") {
  Image img({1, 2, 4}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
  const Image r = resize_bilinear(img, 1, 2);
  CHECK(r[0] == doctest::Approx(2.5));
  CHECK(r[1] == doctest::Approx(4.5));
}

TEST_CASE("identity chain leaves the resized input") {
  const Image img = ramp_image(3, 24, 24);
  detail::Rng rng(5);
  const auto [a, b] = augment_pair(img, identity_spec(24), rng);
  CHECK(a == img);
  CHECK(b == img);
  const auto [c, d] = augment_pair(img, identity_spec(16), rng);
  const Image expect = resize_bilinear(img, 16, 16);
  CHECK(c == expect);
  CHECK(d == expect);
}

TEST_CASE("augmentation is deterministic and bounded") {
  const Image img = ramp_image(3, 40, 40);
  AugmentationSpec spec;
  spec.out_side = 16;
  detail::Rng r1(77), r2(77);
  for (int i = 0; i < 20; ++i) {
    const auto p1 = augment_pair(img, spec, r1);
    const auto p2 = augment_pair(img, spec, r2);
    CHECK(p1.first == p2.first);
    CHECK(p1.second == p2.second);
    CHECK(p1.first.shape() == Shape{3, 16, 16});
    for (double v : p1.first.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  detail::Rng r3(78);
  CHECK_FALSE(augment_pair(img, spec, r3).first == augment_pair(img, spec, r1).first);
}

TEST_CASE("flip rate matches its probability") {
  const Image img = ramp_image(3, 8, 8);
  Image flipped(img.shape());
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) flipped[(k * 8 + y) * 8 + x] = img[(k * 8 + y) * 8 + (7 - x)];

  auto spec = identity_spec(8);
  spec.hflip_prob = 0.5;
  detail::Rng rng(2024);
  int flips = 0;
  for (int i = 0; i < 1000; ++i) {
    const Image out = augment(img, spec, rng);
    if (out == flipped) {
      ++flips;
    } else {
      REQUIRE(out == img);
    }
  }
  // 3 sigma of Binomial(1000, 0.5) is ~47.
  CHECK(flips >= 450);
  CHECK(flips <= 550);
}

TEST_CASE("augment errors") {
  AugmentationSpec spec;
  spec.out_side = 32;
  detail::Rng rng(1);
  CHECK_ERRC(augment_pair(ramp_image(3, 31, 64), spec, rng), Errc::ImageTooSmall);
  CHECK_ERRC(augment_pair(ramp_image(3, 64, 16), spec, rng), Errc::ImageTooSmall);

  auto bad = spec;
  bad.hflip_prob = 1.5;
  CHECK_ERRC(bad.validate(), Errc::InvalidConfig);
  bad = spec;
  bad.crop_scale_min = 0.0;
  CHECK_ERRC(bad.validate(), Errc::InvalidConfig);
  bad = spec;
  bad.out_side = 4;
  CHECK_ERRC(bad.validate(), Errc::InvalidConfig);
  bad = spec;
  bad.crop_scale_max = 1.2;
  CHECK_ERRC(bad.validate(), Errc::InvalidConfig);
}
