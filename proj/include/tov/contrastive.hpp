#pragma once

#include "tov/tensor.hpp"

namespace tov::ssl {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dloss/dz, same shape as z
};

/// Normalised-temperature cross entropy over (2n, d) projections where rows
/// 2i and 2i+1 are the two views of sample i. Every other row of the batch is
/// a negative. Cosine similarity, mean over all 2n anchors.
/// Throws ShapeMismatch (odd or fewer than 4 rows), InvalidConfig (tau <= 0)
/// and ZeroNormEmbedding (a row with norm below 1e-12).
LossResult nt_xent(const Tensor& z, double tau);

}  // namespace tov::ssl
