#pragma once

#include <stdexcept>
#include <string>

namespace mvpose {

enum class ErrorKind {
  AngleNearPi,
  BehindCamera,
  DegenerateBox,
  ParseError,
  EmptyMesh,
  FullyBehindCamera,
  OutOfBounds,
  NoVisibleSurface,
  BadMagic,
  DimMismatch,
  TruncatedFile,
  SingularNormalEquations,
  UnknownView,
  UnknownObject,
  PlacementFailure,
  InvalidArgument,
  Io,
  Schema,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers can branch
/// on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mvpose
