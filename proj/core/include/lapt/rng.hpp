// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace lapt {

enum class RngPurpose : std::uint64_t {
    ToyWorld = 1,
    Mixing = 2,
    PromptInit = 3,
    BatchOrder = 4,
};

std::string_view to_string(RngPurpose purpose);

/// Portable, purpose-tagged random stream.
///
/// The generator is xoshiro256** seeded by running SplitMix64 over
/// (seed, purpose). Every derived quantity (uniform doubles, Gaussians,
/// integers in a range) is computed here from raw 64-bit outputs rather than
/// through <random> distributions, whose algorithms are implementation
/// defined. The same (seed, purpose) therefore yields the same sequence on
/// every conforming platform.
///
/// Streams are single-owner. Use `fork` to derive an independent child
/// stream for a sub-task without consuming draws from the parent.
class RngStream {
public:
    RngStream(std::uint64_t seed, RngPurpose purpose);

    std::uint64_t seed() const noexcept { return seed_; }
    RngPurpose purpose() const noexcept { return purpose_; }

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer on [0, bound). bound must be positive.
    std::uint64_t uniform_index(std::uint64_t bound);

    /// Standard normal (Marsaglia polar method).
    double normal();

    /// Child stream keyed by `key`; the parent state is untouched.
    RngStream fork(std::uint64_t key) const;

private:
    RngStream(std::uint64_t seed, RngPurpose purpose, std::uint64_t key);

    std::uint64_t seed_;
    RngPurpose purpose_;
    std::uint64_t key_;
    std::array<std::uint64_t, 4> state_{};
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// Gamma(shape, 1) draw via Marsaglia-Tsang, with the U^(1/shape) boost for
/// shape < 1. Throws NonPositiveParameter for shape <= 0.
double sample_gamma(double shape, RngStream& rng);

/// Symmetric Beta(a, a) draw as X / (X + Y) with X, Y ~ Gamma(a).
/// Throws NonPositiveParameter for a <= 0.
double sample_beta(double a, RngStream& rng);

} // namespace lapt
