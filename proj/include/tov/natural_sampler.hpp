#pragma once

#include <string>
#include <vector>

#include "tov/geo_raster.hpp"
#include "tov/region_proposal.hpp"
#include "tov/taxonomy.hpp"

namespace tov::natural {

/// Sum of p * ln(p) over the histogram (0 ln 0 = 0). Always <= 0; equals 0
/// exactly for one-hot histograms. Throws InvalidHistogram.
double homogeneity_score(const geo::ClassHistogram& h);

/// The threshold applies to exp(score), the geometric-mean pixel probability,
/// so that a threshold in (0, 1] is meaningful for a non-positive score.
bool keep_candidate(double score, double threshold);

/// Lowest class id among the maxima.
int dominant_class(const geo::ClassHistogram& h);

struct NaturalParams {
  proposal::SearchParams search;
  double threshold = 0.2;
};

/// Candidate windows from selective search over `image`, scored against the
/// land cover resampled into the image grid. Candidates touching land-cover
/// no-data are skipped. Labels are natural category names. Throws CrsMismatch,
/// NoOverlap, UnknownClassId.
std::vector<Sample> sample_natural(const geo::GeoRaster& image, const geo::GeoRaster& landcover,
                                   const NaturalParams& params, const std::string& image_id);

/// Same as above for caller-supplied candidate windows.
std::vector<Sample> score_candidates(const geo::GeoRaster& aligned_landcover, const std::vector<geo::Rect>& candidates,
                                     double threshold, const std::string& image_id);

}  // namespace tov::natural
