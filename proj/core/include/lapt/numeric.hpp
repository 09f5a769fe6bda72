// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "lapt/linalg.hpp"

namespace lapt {

/// Norms at or below this are treated as zero by normalization and cosine.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Unit-norm copy of `v`. Throws ZeroVector when ‖v‖ <= 1e-12.
Vector l2_normalize(std::span<const double> v);

/// In-place variant; same contract.
void l2_normalize_inplace(std::span<double> v);

/// ⟨u,v⟩ / (‖u‖‖v‖), clamped to [-1, 1].
double cosine(std::span<const double> u, std::span<const double> v);

/// Softmax of logits / tau, computed with max-subtraction.
Vector softmax_temp(std::span<const double> logits, double tau);

} // namespace lapt
