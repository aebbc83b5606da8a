#include "tov/error.hpp"

namespace tov {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::UnreadableImage: return "UnreadableImage";
    case Errc::MalformedWorldFile: return "MalformedWorldFile";
    case Errc::SingularTransform: return "SingularTransform";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::WindowOutOfBounds: return "WindowOutOfBounds";
    case Errc::UnknownClassId: return "UnknownClassId";
    case Errc::EmptyPatch: return "EmptyPatch";
    case Errc::NonPositiveParameter: return "NonPositiveParameter";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidHistogram: return "InvalidHistogram";
    case Errc::CrsMismatch: return "CrsMismatch";
    case Errc::NoOverlap: return "NoOverlap";
    case Errc::MalformedXml: return "MalformedXml";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::MalformedRuleTable: return "MalformedRuleTable";
    case Errc::UnknownCategory: return "UnknownCategory";
    case Errc::TaxonomyOverlap: return "TaxonomyOverlap";
    case Errc::EmptyNaturalClass: return "EmptyNaturalClass";
    case Errc::MalformedManifest: return "MalformedManifest";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::ZeroNormEmbedding: return "ZeroNormEmbedding";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::InvalidFreezeSpec: return "InvalidFreezeSpec";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::MalformedCheckpoint: return "MalformedCheckpoint";
    case Errc::InsufficientShots: return "InsufficientShots";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::Empty: return "Empty";
    case Errc::MissingCheckpoint: return "MissingCheckpoint";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace tov
