// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/error.hpp"

namespace lapt {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::NonPositiveParameter: return "NonPositiveParameter";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::InsufficientCorpus: return "InsufficientCorpus";
    case ErrorCode::InsufficientCandidates: return "InsufficientCandidates";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::NormViolation: return "NormViolation";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::ProvenanceMismatch: return "ProvenanceMismatch";
    case ErrorCode::NumericFailure: return "NumericFailure";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace lapt
