// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lapt {

enum class ErrorCode {
    ZeroVector,
    DimensionMismatch,
    NonPositiveTemperature,
    NonPositiveParameter,
    RangeError,
    InsufficientCorpus,
    InsufficientCandidates,
    IndexOutOfRange,
    BadMagic,
    TruncatedFile,
    ManifestMismatch,
    NormViolation,
    ConfigError,
    EmptyInput,
    LengthMismatch,
    MissingArtifact,
    ProvenanceMismatch,
    NumericFailure,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `code()` is stable and is what
/// callers and tests dispatch on; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace lapt
