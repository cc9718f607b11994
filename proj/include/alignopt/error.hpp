// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alignopt {

enum class ErrorCode {
  InvalidArgument,
  SizeTooSmall,
  SizeLimitExceeded,
  KindMismatch,
  IndexOutOfRange,
  IncompatibleHeuristic,
  NonpositiveReference,
  UnsupportedWeightType,
  MissingCoordSection,
  DimensionMismatch,
  ParseError,
  NeighborCountTooLarge,
  StoreMiss,
  TransportFailure,
  BadMagic,
  VersionMismatch,
  TruncatedPayload,
  ShapeMismatch,
  FullyMaskedRow,
  NonScalarLoss,
  NonFiniteValue,
  ZeroNorm,
  BatchTooSmall,
  EmptyPool,
  NoFeasibleAction,
  UnregisteredKind,
  MissingReference,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SizeTooSmall: return "SizeTooSmall";
    case ErrorCode::SizeLimitExceeded: return "SizeLimitExceeded";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::IncompatibleHeuristic: return "IncompatibleHeuristic";
    case ErrorCode::NonpositiveReference: return "NonpositiveReference";
    case ErrorCode::UnsupportedWeightType: return "UnsupportedWeightType";
    case ErrorCode::MissingCoordSection: return "MissingCoordSection";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NeighborCountTooLarge: return "NeighborCountTooLarge";
    case ErrorCode::StoreMiss: return "StoreMiss";
    case ErrorCode::TransportFailure: return "TransportFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::FullyMaskedRow: return "FullyMaskedRow";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::NoFeasibleAction: return "NoFeasibleAction";
    case ErrorCode::UnregisteredKind: return "UnregisteredKind";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every module reports failures through this exception; the code is stable
/// and machine-readable, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace alignopt
