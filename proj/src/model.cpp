#include "tov/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "tov/detail/parallel.hpp"
#include "tov/detail/rng.hpp"
#include "tov/error.hpp"

namespace tov::ssl {

namespace {

// Gradients are summed per fixed-size chunk of samples, then chunks in order,
// so the result does not depend on the thread count.
constexpr std::size_t kChunk = 8;

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * b[p * n + j];
      c[i * k + p] += acc;
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      double* cp = c + p * n;
      const double* bi = b + i * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
}

std::vector<double> im2col(const double* x, std::size_t channels, std::size_t side) {
  const std::size_t plane = side * side;
  std::vector<double> cols(channels * 9 * plane, 0.0);
  const long s = static_cast<long>(side);
  for (std::size_t c = 0; c < channels; ++c)
    for (long ky = 0; ky < 3; ++ky)
      for (long kx = 0; kx < 3; ++kx) {
        double* row = cols.data() + (c * 9 + ky * 3 + kx) * plane;
        for (long y = 0; y < s; ++y) {
          const long sy = y + ky - 1;
          if (sy < 0 || sy >= s) continue;
          for (long xx = 0; xx < s; ++xx) {
            const long sx = xx + kx - 1;
            if (sx >= 0 && sx < s) row[y * s + xx] = x[(c * side + sy) * side + sx];
          }
        }
      }
  return cols;
}

void col2im(const double* cols, std::size_t channels, std::size_t side, double* x) {
  const std::size_t plane = side * side;
  const long s = static_cast<long>(side);
  for (std::size_t c = 0; c < channels; ++c)
    for (long ky = 0; ky < 3; ++ky)
      for (long kx = 0; kx < 3; ++kx) {
        const double* row = cols + (c * 9 + ky * 3 + kx) * plane;
        for (long y = 0; y < s; ++y) {
          const long sy = y + ky - 1;
          if (sy < 0 || sy >= s) continue;
          for (long xx = 0; xx < s; ++xx) {
            const long sx = xx + kx - 1;
            if (sx >= 0 && sx < s) x[(c * side + sy) * side + sx] += row[y * s + xx];
          }
        }
      }
}

// y = W x + b for W (out x in).
std::vector<double> linear(const Layer& l, const std::vector<double>& x) {
  const std::size_t out = l.weight.dim(0), in = l.weight.dim(1);
  std::vector<double> y(l.bias.values());
  for (std::size_t i = 0; i < out; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < in; ++j) acc += l.weight[i * in + j] * x[j];
    y[i] += acc;
  }
  return y;
}

void check_batch(const ModelSpec& spec, const Tensor& batch) {
  const std::size_t factor = std::size_t{1} << spec.blocks();
  if (batch.rank() != 4 || batch.dim(1) != std::size_t(spec.in_channels) || batch.dim(2) != batch.dim(3) ||
      batch.dim(2) < factor || batch.dim(2) % factor != 0) {
    throw Error(Errc::ShapeMismatch, "batch shape " + shape_string(batch.shape()) + " does not fit " +
                                         std::to_string(spec.blocks()) + " blocks over " +
                                         std::to_string(spec.in_channels) + " channels (square side divisible by " +
                                         std::to_string(factor) + ")");
  }
}

// Forward pass of one sample; `cache` may be null.
std::vector<double> encode_one(const EncoderState& enc, const double* input, std::size_t side, SampleCache* cache) {
  const auto& spec = enc.spec;
  std::vector<double> x(input, input + spec.in_channels * side * side);
  for (auto& v : x) v = (v - spec.input_mean) / spec.input_std;
  std::size_t cin = spec.in_channels;
  for (int b = 0; b < spec.blocks(); ++b) {
    const Layer& l = enc.layers[b];
    const std::size_t cout = spec.channels[b], plane = side * side, half = side / 2;
    auto cols = im2col(x.data(), cin, side);
    std::vector<double> pre(cout * plane);
    for (std::size_t co = 0; co < cout; ++co) std::fill_n(pre.begin() + co * plane, plane, l.bias[co]);
    gemm_nn(l.weight.data(), cols.data(), pre.data(), cout, cin * 9, plane);

    std::vector<double> pooled(cout * half * half);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < half; ++y)
        for (std::size_t q = 0; q < half; ++q) {
          const double* p = pre.data() + co * plane + 2 * y * side + 2 * q;
          pooled[(co * half + y) * half + q] = 0.25 * (std::max(p[0], 0.0) + std::max(p[1], 0.0) +
                                                       std::max(p[side], 0.0) + std::max(p[side + 1], 0.0));
        }
    if (cache) {
      cache->side.push_back(side);
      cache->cols.push_back(std::move(cols));
      cache->pre.push_back(std::move(pre));
    }
    x = std::move(pooled);
    cin = cout;
    side = half;
  }
  std::vector<double> g(cin, 0.0);
  const std::size_t plane = side * side;
  for (std::size_t c = 0; c < cin; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x[c * plane + i];
    g[c] = acc / double(plane);
  }
  auto h = linear(enc.layers.back(), g);
  if (cache) cache->pooled = std::move(g);
  return h;
}

void backward_one(const Model& model, const SampleCache& c, const double* dz, std::vector<std::vector<double>>& grad) {
  const auto& enc = model.encoder;
  const int B = enc.spec.blocks();
  const std::size_t d_h = enc.spec.d_h, d_z = enc.spec.d_z, hidden = model.head.fc1.weight.dim(0);
  const auto& W1 = model.head.fc1.weight;
  const auto& W2 = model.head.fc2.weight;
  const std::size_t i_fc1 = 2 * (B + 1), i_fc2 = i_fc1 + 2;

  std::vector<double> r1(hidden);
  for (std::size_t j = 0; j < hidden; ++j) r1[j] = std::max(c.a1[j], 0.0);
  std::vector<double> da1(hidden, 0.0);
  const bool head = !model.head.frozen;
  for (std::size_t i = 0; i < d_z; ++i) {
    for (std::size_t j = 0; j < hidden; ++j) {
      if (head) grad[i_fc2][i * hidden + j] += dz[i] * r1[j];
      da1[j] += W2[i * hidden + j] * dz[i];
    }
    if (head) grad[i_fc2 + 1][i] += dz[i];
  }
  for (std::size_t j = 0; j < hidden; ++j)
    if (!(c.a1[j] > 0.0)) da1[j] = 0.0;
  std::vector<double> dh(d_h, 0.0);
  for (std::size_t i = 0; i < hidden; ++i) {
    for (std::size_t j = 0; j < d_h; ++j) {
      if (head) grad[i_fc1][i * d_h + j] += da1[i] * c.h[j];
      dh[j] += W1[i * d_h + j] * da1[i];
    }
    if (head) grad[i_fc1 + 1][i] += da1[i];
  }

  // Frozen layers form a prefix; nothing below the first trainable layer needs gradients.
  int lowest = B + 1;
  for (int l = 0; l <= B; ++l)
    if (!enc.frozen_mask[l]) {
      lowest = l;
      break;
    }
  if (lowest > B) return;

  const Layer& embed = enc.layers[B];
  const std::size_t c_last = c.pooled.size();
  if (!enc.frozen_mask[B]) {
    for (std::size_t i = 0; i < d_h; ++i) {
      for (std::size_t j = 0; j < c_last; ++j) grad[2 * B][i * c_last + j] += dh[i] * c.pooled[j];
      grad[2 * B + 1][i] += dh[i];
    }
  }
  if (lowest == B) return;

  std::vector<double> dg(c_last, 0.0);
  for (std::size_t i = 0; i < d_h; ++i)
    for (std::size_t j = 0; j < c_last; ++j) dg[j] += embed.weight[i * c_last + j] * dh[i];

  std::size_t side = c.side[B - 1] / 2;
  std::vector<double> dpooled(c_last * side * side);
  for (std::size_t ch = 0; ch < c_last; ++ch)
    std::fill_n(dpooled.begin() + ch * side * side, side * side, dg[ch] / double(side * side));

  for (int b = B - 1; b >= lowest; --b) {
    const Layer& l = enc.layers[b];
    const std::size_t s = c.side[b], plane = s * s, half = s / 2;
    const std::size_t cout = enc.spec.channels[b], cin = b == 0 ? enc.spec.in_channels : enc.spec.channels[b - 1];
    const auto& pre = c.pre[b];
    std::vector<double> dpre(cout * plane);
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t q = 0; q < s; ++q) {
          const std::size_t k = co * plane + y * s + q;
          dpre[k] = pre[k] > 0.0 ? 0.25 * dpooled[(co * half + y / 2) * half + q / 2] : 0.0;
        }
    if (!enc.frozen_mask[b]) {
      gemm_nt(dpre.data(), c.cols[b].data(), grad[2 * b].data(), cout, plane, cin * 9);
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += dpre[co * plane + i];
        grad[2 * b + 1][co] += acc;
      }
    }
    if (b > lowest) {
      std::vector<double> dcols(cin * 9 * plane, 0.0);
      gemm_tn(l.weight.data(), dpre.data(), dcols.data(), cout, cin * 9, plane);
      dpooled.assign(cin * plane, 0.0);
      col2im(dcols.data(), cin, s, dpooled.data());
    }
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (in_channels < 1) throw Error(Errc::InvalidConfig, "in_channels must be positive");
  if (channels.empty()) throw Error(Errc::InvalidConfig, "model has no conv blocks");
  for (int c : channels)
    if (c < 1) throw Error(Errc::InvalidConfig, "block channels must be positive");
  if (d_h < 1) throw Error(Errc::InvalidConfig, "d_h must be positive");
  if (d_z < 2) throw Error(Errc::InvalidConfig, "projection size d_z must be at least 2");
  if (!std::isfinite(input_mean) || !std::isfinite(input_std) || !(input_std > 0))
    throw Error(Errc::InvalidConfig, "input_std must be positive and finite");
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : encoder.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto* l : {&head.fc1, &head.fc2}) {
    out.push_back(&l->weight);
    out.push_back(&l->bias);
  }
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& l : encoder.layers) {
    out.push_back(l.name + ".weight");
    out.push_back(l.name + ".bias");
  }
  for (const auto* l : {&head.fc1, &head.fc2}) {
    out.push_back(l->name + ".weight");
    out.push_back(l->name + ".bias");
  }
  return out;
}

std::vector<bool> Model::frozen_parameters() const {
  std::vector<bool> out;
  for (bool f : encoder.frozen_mask) out.insert(out.end(), {f, f});
  out.insert(out.end(), 4, head.frozen);
  return out;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  detail::Rng rng(seed);
  auto make = [&](std::string name, std::size_t out, Shape wshape) {
    Layer l{std::move(name), Tensor(wshape), Tensor({out})};
    const double fan_in = double(shape_size(wshape) / out);
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : l.weight.values()) v = stddev * rng.normal();
    return l;
  };
  Model m;
  m.encoder.spec = spec;
  std::size_t cin = spec.in_channels;
  for (int b = 0; b < spec.blocks(); ++b) {
    const std::size_t cout = spec.channels[b];
    m.encoder.layers.push_back(make("block" + std::to_string(b), cout, {cout, cin, 3, 3}));
    cin = cout;
  }
  m.encoder.layers.push_back(make("embed", spec.d_h, {std::size_t(spec.d_h), cin}));
  m.encoder.frozen_mask.assign(spec.blocks() + 1, false);
  m.head.fc1 = make("head.fc1", spec.d_h, {std::size_t(spec.d_h), std::size_t(spec.d_h)});
  m.head.fc2 = make("head.fc2", spec.d_z, {std::size_t(spec.d_z), std::size_t(spec.d_h)});
  return m;
}

ForwardResult forward(const Model& model, const Tensor& batch, int threads) {
  const auto& spec = model.encoder.spec;
  check_batch(spec, batch);
  batch.require_finite("input batch");
  const std::size_t n = batch.dim(0), side = batch.dim(2), stride = spec.in_channels * side * side;
  ForwardResult r{Tensor({n, std::size_t(spec.d_h)}), Tensor({n, std::size_t(spec.d_z)}), std::vector<SampleCache>(n)};
  detail::parallel_for(n, threads, [&](std::size_t i) {
    auto& c = r.cache[i];
    c.h = encode_one(model.encoder, batch.data() + i * stride, side, &c);
    c.a1 = linear(model.head.fc1, c.h);
    std::vector<double> r1(c.a1.size());
    for (std::size_t j = 0; j < r1.size(); ++j) r1[j] = std::max(c.a1[j], 0.0);
    c.z = linear(model.head.fc2, r1);
    std::copy(c.h.begin(), c.h.end(), r.h.data() + i * spec.d_h);
    std::copy(c.z.begin(), c.z.end(), r.z.data() + i * spec.d_z);
  });
  r.h.require_finite("features h");
  r.z.require_finite("projections z");
  return r;
}

Tensor encode(const EncoderState& encoder, const Tensor& batch, int threads) {
  const auto& spec = encoder.spec;
  check_batch(spec, batch);
  batch.require_finite("input batch");
  const std::size_t n = batch.dim(0), side = batch.dim(2), stride = spec.in_channels * side * side;
  Tensor h({n, std::size_t(spec.d_h)});
  detail::parallel_for(n, threads, [&](std::size_t i) {
    const auto row = encode_one(encoder, batch.data() + i * stride, side, nullptr);
    std::copy(row.begin(), row.end(), h.data() + i * spec.d_h);
  });
  h.require_finite("features h");
  return h;
}

std::vector<Tensor> backward(const Model& model, const ForwardResult& fwd, const Tensor& dz, int threads) {
  const std::size_t n = fwd.cache.size();
  if (dz.rank() != 2 || dz.dim(0) != n || dz.dim(1) != std::size_t(model.encoder.spec.d_z)) {
    throw Error(Errc::ShapeMismatch, "dz shape " + shape_string(dz.shape()) + " does not match the forward batch");
  }
  dz.require_finite("loss gradient");
  const auto params = model.parameters();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<std::vector<double>>> partial(chunks);
  detail::parallel_for(chunks, threads, [&](std::size_t k) {
    auto& g = partial[k];
    for (const auto* p : params) g.emplace_back(p->size(), 0.0);
    for (std::size_t i = k * kChunk; i < std::min(n, (k + 1) * kChunk); ++i)
      backward_one(model, fwd.cache[i], dz.data() + i * dz.dim(1), g);
  });
  std::vector<Tensor> grads;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor g(params[p]->shape());
    for (const auto& part : partial)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += part[p][i];
    grads.push_back(std::move(g));
  }
  return grads;
}

FreezeSpec FreezeSpec::parse(const std::string& text) {
  FreezeSpec f;
  if (text == "none") {
    f.mode = Mode::None;
  } else if (text == "all") {
    f.mode = Mode::All;
  } else if (text == "auto") {
    f.mode = Mode::Auto;
  } else if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    f.mode = Mode::Count;
    f.count = std::stoi(text);
  } else if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c == '0' || c == '1' || c == ','; })) {
    f.mode = Mode::Mask;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
      if (item.size() != 1) throw Error(Errc::InvalidFreezeSpec, "bad freeze mask '" + text + "'");
      f.mask.push_back(item == "1");
    }
  } else {
    throw Error(Errc::InvalidFreezeSpec,
                "freeze spec '" + text + "' is not none, all, auto, a layer count or a 0/1 mask");
  }
  return f;
}

std::vector<bool> FreezeSpec::resolve(int blocks) const {
  const int layers = blocks + 1;
  std::vector<bool> out(layers, false);
  switch (mode) {
    case Mode::None: break;
    case Mode::All: out.assign(layers, true); break;
    case Mode::Auto:
      for (int b = 0; b < (2 * blocks + 2) / 3; ++b) out[b] = true;
      break;
    case Mode::Count:
      if (count < 0 || count > layers) {
        throw Error(Errc::InvalidFreezeSpec,
                    "cannot freeze " + std::to_string(count) + " of " + std::to_string(layers) + " layers");
      }
      for (int l = 0; l < count; ++l) out[l] = true;
      break;
    case Mode::Mask:
      if (int(mask.size()) != layers) {
        throw Error(Errc::InvalidFreezeSpec, "freeze mask has " + std::to_string(mask.size()) + " entries, model has " +
                                                 std::to_string(layers) + " layers");
      }
      for (int l = 1; l < layers; ++l)
        if (mask[l] && !mask[l - 1]) throw Error(Errc::InvalidFreezeSpec, "frozen layers must form a prefix");
      out = mask;
      break;
  }
  return out;
}

std::string FreezeSpec::to_string() const {
  switch (mode) {
    case Mode::None: return "none";
    case Mode::All: return "all";
    case Mode::Auto: return "auto";
    case Mode::Count: return std::to_string(count);
    case Mode::Mask: {
      std::string s;
      for (std::size_t i = 0; i < mask.size(); ++i) s += std::string(i ? "," : "") + (mask[i] ? "1" : "0");
      return s;
    }
  }
  return {};
}

}  // namespace tov::ssl
