// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "lapt/error.hpp"

namespace lapt {

void l2_normalize_inplace(std::span<double> v) {
    const double n = norm(v);
    if (!(n > kZeroNormThreshold)) {
        fail(ErrorCode::ZeroVector, "cannot normalize a vector with norm " + std::to_string(n));
    }
    for (double& x : v) {
        x /= n;
    }
}

Vector l2_normalize(std::span<const double> v) {
    Vector out(v.begin(), v.end());
    l2_normalize_inplace(out);
    return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    const double nu = norm(u);
    const double nv = norm(v);
    if (!(nu > kZeroNormThreshold) || !(nv > kZeroNormThreshold)) {
        fail(ErrorCode::ZeroVector, "cosine of a zero vector");
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Vector softmax_temp(std::span<const double> logits, double tau) {
    if (!(tau > 0.0)) {
        fail(ErrorCode::NonPositiveTemperature, "tau must be positive, got " + std::to_string(tau));
    }
    if (logits.empty()) {
        return {};
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - top) / tau);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

} // namespace lapt
