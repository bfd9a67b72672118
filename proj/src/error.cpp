#include "mvpose/error.hpp"

namespace mvpose {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::AngleNearPi: return "AngleNearPi";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::DegenerateBox: return "DegenerateBox";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyMesh: return "EmptyMesh";
    case ErrorKind::FullyBehindCamera: return "FullyBehindCamera";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::NoVisibleSurface: return "NoVisibleSurface";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorKind::UnknownView: return "UnknownView";
    case ErrorKind::UnknownObject: return "UnknownObject";
    case ErrorKind::PlacementFailure: return "PlacementFailure";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Schema: return "Schema";
  }
  return "Unknown";
}

}  // namespace mvpose
