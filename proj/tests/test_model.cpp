#include <cmath>

#include "test_util.hpp"
#include "tov/detail/rng.hpp"
#include "tov/model.hpp"

using namespace tov;
using namespace tov::ssl;

namespace {

using Vec = std::vector<double>;

// Straight loops over (channel, row, column); zero padding, cross-correlation.
Vec naive_conv(const Vec& x, std::size_t cin, std::size_t s, const Layer& l, std::size_t cout) {
  Vec out(cout * s * s);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t q = 0; q < s; ++q) {
        double acc = l.bias[o];
        for (std::size_t i = 0; i < cin; ++i)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = long(y) + dy, xx = long(q) + dx;
              if (yy < 0 || xx < 0 || yy >= long(s) || xx >= long(s)) continue;
              acc += l.weight[((o * cin + i) * 3 + (dy + 1)) * 3 + (dx + 1)] * x[(i * s + yy) * s + xx];
            }
        out[(o * s + y) * s + q] = acc;
      }
  return out;
}

Vec naive_dense(const Layer& l, const Vec& x) {
  const std::size_t out = l.weight.dim(0), in = l.weight.dim(1);
  Vec y(out);
  for (std::size_t i = 0; i < out; ++i) {
    y[i] = l.bias[i];
    for (std::size_t j = 0; j < in; ++j) y[i] += l.weight[i * in + j] * x[j];
  }
  return y;
}

std::pair<Vec, Vec> naive_forward(const Model& m, const Vec& input, std::size_t side) {
  const auto& spec = m.encoder.spec;
  Vec x = input;
  for (auto& v : x) v = (v - spec.input_mean) / spec.input_std;
  std::size_t c = spec.in_channels, s = side;
  for (int b = 0; b < spec.blocks(); ++b) {
    const std::size_t co = spec.channels[b];
    Vec a = naive_conv(x, c, s, m.encoder.layers[b], co);
    for (auto& v : a) v = v > 0 ? v : 0.0;
    Vec p(co * (s / 2) * (s / 2));
    for (std::size_t k = 0; k < co; ++k)
      for (std::size_t y = 0; y < s / 2; ++y)
        for (std::size_t q = 0; q < s / 2; ++q) {
          double sum = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) sum += a[(k * s + 2 * y + dy) * s + 2 * q + dx];
          p[(k * (s / 2) + y) * (s / 2) + q] = sum / 4;
        }
    x = p;
    c = co;
    s /= 2;
  }
  Vec g(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < s * s; ++i) g[k] += x[k * s * s + i];
    g[k] /= double(s * s);
  }
  Vec h = naive_dense(m.encoder.layers.back(), g);
  Vec a1 = naive_dense(m.head.fc1, h);
  for (auto& v : a1) v = v > 0 ? v : 0.0;
  return {h, naive_dense(m.head.fc2, a1)};
}

Tensor random_batch(std::size_t n, std::size_t c, std::size_t side, std::uint64_t seed) {
  detail::Rng rng(seed);
  Tensor t({n, c, side, side});
  for (auto& v : t.values()) v = rng.uniform(0.0, 1.0);
  return t;
}

ModelSpec small_spec() {
  ModelSpec s;
  s.channels = {4, 6, 5};
  s.d_h = 7;
  s.d_z = 3;
  return s;
}

}  // namespace

TEST_CASE("forward matches a naive reference") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelSpec spec = small_spec();
    spec.channels.resize(1 + seed % 3);
    const Model m = init_model(spec, seed);
    const std::size_t side = 16;
    const Tensor batch = random_batch(2, 3, side, 100 + seed);
    const auto fwd = forward(m, batch);
    REQUIRE(fwd.h.shape() == Shape{2, 7});
    REQUIRE(fwd.z.shape() == Shape{2, 3});
    for (std::size_t i = 0; i < 2; ++i) {
      const std::size_t n = 3 * side * side;
      const auto [h, z] = naive_forward(m, Vec(batch.data() + i * n, batch.data() + (i + 1) * n), side);
      for (std::size_t j = 0; j < h.size(); ++j) CHECK(std::abs(fwd.h[i * 7 + j] - h[j]) <= 1e-12);
      for (std::size_t j = 0; j < z.size(); ++j) CHECK(std::abs(fwd.z[i * 3 + j] - z[j]) <= 1e-12);
    }
  }
}

TEST_CASE("zero weights give zero projections") {
  Model m = init_model(small_spec(), 3);
  for (Tensor* p : m.parameters()) std::fill(p->values().begin(), p->values().end(), 0.0);
  const auto fwd = forward(m, random_batch(3, 3, 8, 9));
  for (double v : fwd.z.values()) CHECK(v == 0.0);
  for (double v : fwd.h.values()) CHECK(v == 0.0);
}

TEST_CASE("identical images give identical rows") {
  const Model m = init_model(small_spec(), 4);
  Tensor one = random_batch(1, 3, 8, 11);
  Tensor batch({4, 3, 8, 8});
  for (std::size_t i = 0; i < 4; ++i) std::copy(one.values().begin(), one.values().end(), batch.data() + i * one.size());
  const auto fwd = forward(m, batch);
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(fwd.z[i * 3 + j] == fwd.z[j]);
}

TEST_CASE("forward and encode do not depend on the thread count") {
  const Model m = init_model(small_spec(), 8);
  const Tensor batch = random_batch(19, 3, 8, 12);
  const auto a = forward(m, batch, 1);
  const auto b = forward(m, batch, 4);
  CHECK(a.h == b.h);
  CHECK(a.z == b.z);
  CHECK(encode(m.encoder, batch, 3) == a.h);
  Tensor dz({19, 3});
  detail::Rng rng(1);
  for (auto& v : dz.values()) v = rng.normal();
  CHECK(backward(m, a, dz, 1) == backward(m, a, dz, 5));
}

TEST_CASE("forward errors") {
  Model m = init_model(small_spec(), 1);
  CHECK_ERRC(forward(m, random_batch(2, 3, 12, 1)), Errc::ShapeMismatch);  // 12 not divisible by 8
  CHECK_ERRC(forward(m, random_batch(2, 1, 8, 1)), Errc::ShapeMismatch);
  CHECK_ERRC(forward(m, Tensor({2, 3, 8, 4})), Errc::ShapeMismatch);
  m.head.fc2.weight[0] = INFINITY;
  CHECK_ERRC(forward(m, random_batch(2, 3, 8, 1)), Errc::NonFiniteActivation);
  m = init_model(small_spec(), 1);
  Tensor bad = random_batch(2, 3, 8, 1);
  bad[5] = NAN;
  CHECK_ERRC(forward(m, bad), Errc::NonFiniteActivation);
}

TEST_CASE("init is seeded and He-scaled") {
  const ModelSpec spec;
  CHECK(init_model(spec, 1) == init_model(spec, 1));
  CHECK_FALSE(init_model(spec, 1) == init_model(spec, 2));
  const Model m = init_model(spec, 1);
  const Tensor& w = m.encoder.layers[2].weight;  // fan-in 32*9
  double ss = 0;
  for (double v : w.values()) ss += v * v;
  CHECK(ss / double(w.size()) == doctest::Approx(2.0 / 288).epsilon(0.05));
  for (double v : m.encoder.layers[0].bias.values()) CHECK(v == 0.0);
  CHECK(m.parameter_names().size() == m.parameters().size());
  CHECK(m.parameters().size() == 2 * (spec.channels.size() + 1) + 4);
  CHECK(m.encoder.frozen_mask == std::vector<bool>(4, false));
}

TEST_CASE("model spec validation") {
  ModelSpec s;
  s.channels.clear();
  CHECK_ERRC(s.validate(), Errc::InvalidConfig);
  s = ModelSpec{};
  s.d_z = 1;
  CHECK_ERRC(s.validate(), Errc::InvalidConfig);
  s = ModelSpec{};
  s.input_std = 0;
  CHECK_ERRC(s.validate(), Errc::InvalidConfig);
}

TEST_CASE("freeze specs") {
  using M = std::vector<bool>;
  CHECK(FreezeSpec::parse("none").resolve(3) == M{false, false, false, false});
  CHECK(FreezeSpec::parse("all").resolve(3) == M{true, true, true, true});
  CHECK(FreezeSpec::parse("auto").resolve(3) == M{true, true, false, false});
  CHECK(FreezeSpec::parse("auto").resolve(1) == M{true, false});
  CHECK(FreezeSpec::parse("auto").resolve(4) == M{true, true, true, false, false});
  CHECK(FreezeSpec::parse("1").resolve(3) == M{true, false, false, false});
  CHECK(FreezeSpec::parse("1,1,0,0").resolve(3) == M{true, true, false, false});
  CHECK(FreezeSpec::parse("1,1,0,0").to_string() == "1,1,0,0");
  CHECK(FreezeSpec::parse("auto").to_string() == "auto");

  CHECK_ERRC(FreezeSpec::parse("0,1,0,0").resolve(3), Errc::InvalidFreezeSpec);
  CHECK_ERRC(FreezeSpec::parse("1,1,0").resolve(3), Errc::InvalidFreezeSpec);
  CHECK_ERRC(FreezeSpec::parse("5").resolve(3), Errc::InvalidFreezeSpec);
  CHECK_ERRC(FreezeSpec::parse("sometimes"), Errc::InvalidFreezeSpec);
}
