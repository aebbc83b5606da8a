#include "tov/natural_sampler.hpp"

#include <cmath>

#include "tov/error.hpp"

namespace tov::natural {

double homogeneity_score(const geo::ClassHistogram& h) {
  if (h.p.empty()) throw Error(Errc::InvalidHistogram, "empty histogram");
  double sum = 0.0;
  for (double p : h.p) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidHistogram, "histogram entry outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::InvalidHistogram, "histogram does not sum to 1");
  double s = 0.0;
  for (double p : h.p)
    if (p > 0.0) s += p * std::log(p);
  return s;
}

bool keep_candidate(double score, double threshold) { return std::exp(score) >= threshold; }

int dominant_class(const geo::ClassHistogram& h) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(h.p.size()); ++c)
    if (h.p[c] > h.p[best]) best = c;
  return best;
}

namespace {

bool touches_nodata(const geo::GeoRaster& aligned, const geo::Rect& r) {
  for (int row = r.row0; row < r.row_end(); ++row)
    for (int col = r.col0; col < r.col_end(); ++col)
      if (aligned.at(col, row) == geo::kNoData) return true;
  return false;
}

}  // namespace

std::vector<Sample> score_candidates(const geo::GeoRaster& aligned_landcover, const std::vector<geo::Rect>& candidates,
                                     double threshold, const std::string& image_id) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error(Errc::InvalidConfig, "threshold must lie in (0, 1]");
  const auto natural = Taxonomy::standard_natural();
  std::vector<Sample> out;
  for (const auto& rect : candidates) {
    if (touches_nodata(aligned_landcover, rect)) continue;
    const auto hist = geo::class_histogram(aligned_landcover, rect, geo::kNaturalClassCount);
    const double score = homogeneity_score(hist);
    if (!keep_candidate(score, threshold)) continue;
    out.push_back({image_id, rect, natural.at(dominant_class(hist)).name, SourceKind::Natural, score});
  }
  return out;
}

std::vector<Sample> sample_natural(const geo::GeoRaster& image, const geo::GeoRaster& landcover,
                                   const NaturalParams& params, const std::string& image_id) {
  const auto aligned = geo::align_to(image, landcover);
  const auto candidates = proposal::selective_search(image, params.search);
  return score_candidates(aligned, candidates, params.threshold, image_id);
}

}  // namespace tov::natural
