#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tov {

enum class Errc {
  // geo_raster
  UnreadableImage,
  MalformedWorldFile,
  SingularTransform,
  OutOfBounds,
  WindowOutOfBounds,
  UnknownClassId,
  // oversegment / region_proposal
  EmptyPatch,
  NonPositiveParameter,
  DimensionMismatch,
  // natural_sampler
  InvalidHistogram,
  CrsMismatch,
  NoOverlap,
  // osm_sampler
  MalformedXml,
  UnsupportedVersion,
  MalformedRuleTable,
  UnknownCategory,
  // resampler
  TaxonomyOverlap,
  EmptyNaturalClass,
  MalformedManifest,
  // ssl_core
  ImageTooSmall,
  ShapeMismatch,
  NonFiniteActivation,
  ZeroNormEmbedding,
  InsufficientData,
  InvalidFreezeSpec,
  InvalidConfig,
  MalformedCheckpoint,
  // probe_eval
  InsufficientShots,
  LengthMismatch,
  Empty,
  MissingCheckpoint,
  // cli
  Io,
};

std::string_view errc_name(Errc code);

// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace tov
