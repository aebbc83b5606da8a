#include "tov/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "tov/error.hpp"

namespace tov::ssl {

LossResult nt_xent(const Tensor& z, double tau) {
  if (!(tau > 0.0)) throw Error(Errc::InvalidConfig, "temperature must be positive");
  if (z.rank() != 2 || z.dim(0) < 4 || z.dim(0) % 2 != 0) {
    throw Error(Errc::ShapeMismatch, "nt_xent needs an even number (>= 4) of rows, got " + shape_string(z.shape()));
  }
  z.require_finite("projections z");
  const std::size_t N = z.dim(0), d = z.dim(1);

  std::vector<double> norm(N), u(N * d);
  for (std::size_t i = 0; i < N; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += z[i * d + k] * z[i * d + k];
    norm[i] = std::sqrt(sq);
    if (norm[i] < 1e-12) throw Error(Errc::ZeroNormEmbedding, "row " + std::to_string(i) + " has zero norm");
    for (std::size_t k = 0; k < d; ++k) u[i * d + k] = z[i * d + k] / norm[i];
  }

  std::vector<double> s(N * N);
  for (std::size_t a = 0; a < N; ++a)
    for (std::size_t b = 0; b < N; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += u[a * d + k] * u[b * d + k];
      s[a * N + b] = dot / tau;
    }

  // g[a][b] = dloss/ds_ab = (softmax_a(b) - [b is a's positive]) / N
  std::vector<double> g(N * N, 0.0);
  double loss = 0.0;
  for (std::size_t a = 0; a < N; ++a) {
    const std::size_t pos = a ^ 1;
    double mx = -INFINITY;
    for (std::size_t b = 0; b < N; ++b)
      if (b != a) mx = std::max(mx, s[a * N + b]);
    double sum = 0.0;
    for (std::size_t b = 0; b < N; ++b)
      if (b != a) sum += std::exp(s[a * N + b] - mx);
    loss += mx + std::log(sum) - s[a * N + pos];
    for (std::size_t b = 0; b < N; ++b)
      if (b != a) g[a * N + b] = std::exp(s[a * N + b] - mx) / sum / double(N);
    g[a * N + pos] -= 1.0 / double(N);
  }
  loss /= double(N);

  // s_ab = u_a.u_b / tau, so dL/du_a = sum_b (g_ab + g_ba) u_b / tau.
  Tensor grad(z.shape());
  std::vector<double> du(d);
  for (std::size_t a = 0; a < N; ++a) {
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t b = 0; b < N; ++b) {
      if (b == a) continue;
      const double w = (g[a * N + b] + g[b * N + a]) / tau;
      for (std::size_t k = 0; k < d; ++k) du[k] += w * u[b * d + k];
    }
    double radial = 0.0;
    for (std::size_t k = 0; k < d; ++k) radial += u[a * d + k] * du[k];
    for (std::size_t k = 0; k < d; ++k) grad[a * d + k] = (du[k] - u[a * d + k] * radial) / norm[a];
  }
  return {loss, std::move(grad)};
}

}  // namespace tov::ssl
