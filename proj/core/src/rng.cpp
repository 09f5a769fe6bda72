// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/rng.hpp"

#include <cmath>

#include "lapt/error.hpp"

namespace lapt {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

std::string_view to_string(RngPurpose purpose) {
    switch (purpose) {
    case RngPurpose::ToyWorld: return "toy-world";
    case RngPurpose::Mixing: return "mixing";
    case RngPurpose::PromptInit: return "prompt-init";
    case RngPurpose::BatchOrder: return "batch-order";
    }
    return "unknown";
}

RngStream::RngStream(std::uint64_t seed, RngPurpose purpose) : RngStream(seed, purpose, 0) {}

RngStream::RngStream(std::uint64_t seed, RngPurpose purpose, std::uint64_t key)
    : seed_(seed), purpose_(purpose), key_(key) {
    std::uint64_t mix = seed;
    std::uint64_t tag = static_cast<std::uint64_t>(purpose);
    mix ^= splitmix64(tag);
    std::uint64_t k = key;
    mix ^= rotl(splitmix64(k), 17);
    for (auto& word : state_) {
        word = splitmix64(mix);
    }
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t bound) {
    if (bound == 0) {
        fail(ErrorCode::RangeError, "uniform_index bound must be positive");
    }
    // Rejection sampling on the top of the range removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return x % bound;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * factor;
    has_spare_ = true;
    return u * factor;
}

RngStream RngStream::fork(std::uint64_t key) const {
    std::uint64_t k = key_;
    return RngStream(seed_, purpose_, splitmix64(k) ^ (key + 1));
}

double sample_gamma(double shape, RngStream& rng) {
    if (!(shape > 0.0) || !std::isfinite(shape)) {
        fail(ErrorCode::NonPositiveParameter, "gamma shape must be positive and finite");
    }
    if (shape < 1.0) {
        const double g = sample_gamma(shape + 1.0, rng);
        double u = rng.uniform();
        while (u == 0.0) {
            u = rng.uniform();
        }
        return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

double sample_beta(double a, RngStream& rng) {
    if (!(a > 0.0) || !std::isfinite(a)) {
        fail(ErrorCode::NonPositiveParameter, "beta parameter must be positive and finite");
    }
    for (;;) {
        const double x = sample_gamma(a, rng);
        const double y = sample_gamma(a, rng);
        const double total = x + y;
        // Both gammas can underflow to zero for very small shapes; redraw.
        if (total > 0.0) {
            return x / total;
        }
    }
}

} // namespace lapt
