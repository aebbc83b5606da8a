#include "tov/probe.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "tov/detail/rng.hpp"
#include "tov/error.hpp"
#include "tov/train.hpp"

namespace tov::probe {

Tensor extract_features(const ssl::EncoderState& encoder, const std::vector<ssl::Image>& images, int side,
                        int threads) {
  const std::size_t n = images.size(), channels = encoder.spec.in_channels, s = side;
  Tensor batch({n, channels, s, s});
  for (std::size_t i = 0; i < n; ++i) {
    if (images[i].rank() != 3 || images[i].dim(0) != channels) {
      throw Error(Errc::ShapeMismatch, "image " + std::to_string(i) + " has shape " + shape_string(images[i].shape()));
    }
    const auto view = ssl::center_resize(images[i], side);
    std::copy(view.values().begin(), view.values().end(), batch.data() + i * channels * s * s);
  }
  if (n == 0) return Tensor({0, std::size_t(encoder.spec.d_h)});
  return ssl::encode(encoder, batch, threads);
}

namespace {

// Standardised row i of `features` with the probe's statistics.
void standardise(const LinearProbe& p, const double* row, double* out, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) out[j] = (row[j] - p.mean[j]) / p.scale[j];
}

}  // namespace

std::vector<int> LinearProbe::predict(const Tensor& features) const {
  const std::size_t n = features.dim(0), d = features.dim(1), K = num_classes;
  if (d != mean.size()) throw Error(Errc::ShapeMismatch, "feature width does not match the probe");
  std::vector<int> out(n);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    standardise(*this, features.data() + i * d, x.data(), d);
    int best = 0;
    double best_score = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      double s = bias[k];
      for (std::size_t j = 0; j < d; ++j) s += weight[k * d + j] * x[j];
      if (s > best_score) best_score = s, best = int(k);
    }
    out[i] = best;
  }
  return out;
}

LinearProbe fit_linear(const Tensor& features, const std::vector<int>& labels, int num_classes, const ProbeConfig& cfg) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw Error(Errc::LengthMismatch, "features and labels disagree in length");
  }
  if (labels.empty()) throw Error(Errc::Empty, "no training rows for the probe");
  if (num_classes < 2) throw Error(Errc::InvalidConfig, "probe needs at least 2 classes");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw Error(Errc::UnknownClassId, "label " + std::to_string(y) + " out of range");

  const std::size_t n = features.dim(0), d = features.dim(1), K = num_classes;
  LinearProbe p;
  p.num_classes = num_classes;
  p.mean.assign(d, 0.0);
  p.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) p.mean[j] += features[i * d + j] / double(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = features[i * d + j] - p.mean[j];
      p.scale[j] += c * c / double(n);
    }
  for (auto& s : p.scale) s = s > 1e-24 ? std::sqrt(s) : 1.0;

  std::vector<double> x(n * d);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    standardise(p, features.data() + i * d, x.data() + i * d, d);
    for (std::size_t j = 0; j < d; ++j) sq += x[i * d + j] * x[i * d + j];
  }
  // The softmax cross-entropy Hessian is bounded by (1/2) mean |[x, 1]|^2.
  const double L = 0.5 * (sq / double(n) + 1.0) + cfg.weight_decay;
  const double lr = 1.0 / L;

  p.weight = Tensor({K, d});
  p.bias = Tensor({K});
  std::vector<double> prob(K), gw(K * d), gb(K);
  auto loss_and_grad = [&](bool want_grad) {
    double loss = 0.0;
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x.data() + i * d;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < K; ++k) {
        double s = p.bias[k];
        for (std::size_t j = 0; j < d; ++j) s += p.weight[k * d + j] * xi[j];
        prob[k] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) z += std::exp(prob[k] - mx);
      loss += mx + std::log(z) - prob[labels[i]];
      if (!want_grad) continue;
      for (std::size_t k = 0; k < K; ++k) {
        const double r = (std::exp(prob[k] - mx) / z - (int(k) == labels[i] ? 1.0 : 0.0)) / double(n);
        gb[k] += r;
        for (std::size_t j = 0; j < d; ++j) gw[k * d + j] += r * xi[j];
      }
    }
    double reg = 0.0;
    for (std::size_t k = 0; k < K * d; ++k) {
      reg += p.weight[k] * p.weight[k];
      gw[k] += cfg.weight_decay * p.weight[k];
    }
    return loss / double(n) + 0.5 * cfg.weight_decay * reg;
  };

  for (int step = 0; step < cfg.steps; ++step) {
    p.loss_history.push_back(loss_and_grad(true));
    for (std::size_t k = 0; k < K * d; ++k) p.weight[k] -= lr * gw[k];
    for (std::size_t k = 0; k < K; ++k) p.bias[k] -= lr * gb[k];
  }
  p.loss_history.push_back(loss_and_grad(false));
  return p;
}

ShotSplit draw_shots(const std::vector<int>& labels, int num_classes, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw Error(Errc::InvalidConfig, "shots per class must be positive");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw Error(Errc::UnknownClassId, "label " + std::to_string(labels[i]) + " out of range");
    }
    by_class[labels[i]].push_back(i);
  }
  detail::Rng rng(seed);
  ShotSplit split;
  std::vector<bool> taken(labels.size(), false);
  for (int c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < std::size_t(n_per_class)) {
      throw Error(Errc::InsufficientShots, "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                               " samples, " + std::to_string(n_per_class) + " shots requested");
    }
    for (std::size_t i = 0; i < std::size_t(n_per_class); ++i) {
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      split.shots.push_back(idx[i]);
      taken[idx[i]] = true;
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!taken[i]) split.eval.push_back(i);
  return split;
}

namespace {

Tensor rows(const Tensor& features, const std::vector<std::size_t>& idx) {
  const std::size_t d = features.dim(1);
  Tensor out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(features.data() + idx[i] * d, d, out.data() + i * d);
  return out;
}

std::vector<int> pick(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace

ProbeFit fit_probe(const Tensor& features, const std::vector<int>& labels, int num_classes, int n_per_class,
                   const ProbeConfig& cfg, std::uint64_t seed) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw Error(Errc::LengthMismatch, "features and labels disagree in length");
  }
  ProbeFit fit;
  fit.split = draw_shots(labels, num_classes, n_per_class, seed);
  fit.probe = fit_linear(rows(features, fit.split.shots), pick(labels, fit.split.shots), num_classes, cfg);
  return fit;
}

double overall_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                          std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(Errc::Empty, "no predictions to score");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return double(correct) / double(preds.size());
}

ProbeResult run_probe(const Tensor& features, const std::vector<int>& labels, int num_classes, int n_per_class,
                      const ProbeConfig& cfg, std::uint64_t seed) {
  const auto fit = fit_probe(features, labels, num_classes, n_per_class, cfg, seed);
  const auto truth = pick(labels, fit.split.eval);
  const auto preds = fit.probe.predict(rows(features, fit.split.eval));
  ProbeResult r;
  r.oa = overall_accuracy(preds, truth);
  r.n_per_class = n_per_class;
  r.seed = seed;
  std::vector<std::size_t> hit(num_classes, 0), total(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++total[truth[i]];
    hit[truth[i]] += preds[i] == truth[i];
  }
  for (int c = 0; c < num_classes; ++c) r.per_class_acc.push_back(total[c] ? double(hit[c]) / double(total[c]) : 0.0);
  return r;
}

std::vector<ReportRow> compare_inits(const ProbeDataset& data, const std::vector<NamedEncoder>& inits,
                                     const std::vector<int>& shots, const std::vector<std::uint64_t>& seeds,
                                     const ProbeConfig& cfg, int threads) {
  std::vector<ReportRow> out;
  for (const auto& init : inits) {
    const auto features = extract_features(init.encoder, data.images, data.side, threads);
    for (int n : shots)
      for (auto seed : seeds)
        out.push_back({init.name, n, seed, run_probe(features, data.labels, data.num_classes, n, cfg, seed).oa});
  }
  return out;
}

std::vector<ReportRow> compare_inits(const ProbeDataset& data, const std::vector<NamedCheckpoint>& inits,
                                     const std::vector<int>& shots, const std::vector<std::uint64_t>& seeds,
                                     const ProbeConfig& cfg, int threads) {
  std::vector<NamedEncoder> encoders;
  for (const auto& init : inits) {
    if (!std::filesystem::exists(init.checkpoint)) {
      throw Error(Errc::MissingCheckpoint, "checkpoint for '" + init.name + "' not found: " + init.checkpoint.string());
    }
    encoders.push_back({init.name, ssl::load_checkpoint(init.checkpoint).model.encoder});
  }
  return compare_inits(data, encoders, shots, seeds, cfg, threads);
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "init,shots,seed,oa\n";
  for (const auto& r : rows) out << r.init << ',' << r.shots << ',' << r.seed << ',' << std::setprecision(10) << r.oa << '\n';
}

std::vector<Summary> summarize(const std::vector<ReportRow>& rows) {
  std::vector<Summary> out;
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.init, r.shots}];
    if (g.empty()) out.push_back({r.init, r.shots, 0, 0.0, 0.0});
    g.push_back(r.oa);
  }
  for (auto& s : out) {
    const auto& g = groups[{s.init, s.shots}];
    s.runs = g.size();
    for (double v : g) s.mean += v / double(g.size());
    if (g.size() > 1) {
      double ss = 0.0;
      for (double v : g) ss += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(ss / double(g.size() - 1));
    }
  }
  return out;
}

void write_summary(std::ostream& out, const std::vector<Summary>& summary) {
  out << std::left << std::setw(16) << "init" << std::setw(7) << "shots" << std::setw(6) << "runs"
      << "OA % (mean +- std)\n";
  for (const auto& s : summary) {
    out << std::left << std::setw(16) << s.init << std::setw(7) << s.shots << std::setw(6) << s.runs << std::fixed
        << std::setprecision(2) << 100.0 * s.mean << " +- " << 100.0 * s.stddev << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

}  // namespace tov::probe
