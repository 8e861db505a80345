#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flymaster {

enum class ErrorKind {
  MissingField,
  InvalidRange,
  ParseError,
  DimensionMismatch,
  ShapeMismatch,
  EmptyList,
  InvalidWeights,
  EmptyShard,
  TooFewExamples,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  UnknownDevice,
  InvalidProbability,
  SelfLink,
  TooFewSamples,
  DegenerateSamples,
  CountOutOfRange,
  EmptyCandidates,
  MissingStress,
  NotFound,
  KExceedsN,
  MissingColumns,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::InvalidRange: return "InvalidRange";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyList: return "EmptyList";
    case ErrorKind::InvalidWeights: return "InvalidWeights";
    case ErrorKind::EmptyShard: return "EmptyShard";
    case ErrorKind::TooFewExamples: return "TooFewExamples";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::UnknownDevice: return "UnknownDevice";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::SelfLink: return "SelfLink";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::DegenerateSamples: return "DegenerateSamples";
    case ErrorKind::CountOutOfRange: return "CountOutOfRange";
    case ErrorKind::EmptyCandidates: return "EmptyCandidates";
    case ErrorKind::MissingStress: return "MissingStress";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::KExceedsN: return "KExceedsN";
    case ErrorKind::MissingColumns: return "MissingColumns";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so callers can branch
/// on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace flymaster
