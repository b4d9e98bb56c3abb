#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geoprompt {

enum class ErrorKind {
  NearZeroNorm,
  EmptyList,
  DimensionMismatch,
  BadTokenId,
  ParseError,
  DuplicateId,
  EmptyField,
  NoDescriptorsFound,
  NetworkError,
  MissingDescriptors,
  MissingGeography,
  SpecInvariantViolated,
  EmptyInput,
  EmptyClassTokens,
  MissingTarget,
  NonFiniteLoss,
  EmptyClass,
  InvalidConfig,
  EmptyEvalSet,
  UnknownGroupKey,
  StructureMismatch,
  ClassSetMismatch,
  ZeroVariance,
  TooFewPoints,
  UnmappedCountry,
  IoError,
  DimensionTooSmall,
  InsufficientSamples,
  NotFound,
};

std::string_view to_string(ErrorKind kind);

// Every failure in the library is reported through this type; `kind()` is the
// machine-readable part, `what()` carries the human-readable context.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace geoprompt
