// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lapt/linalg.hpp"

namespace lapt {

struct ScoreConfig {
    double tau = 0.01;
    /// Detector threshold; a sample is ID iff score >= gamma.
    double gamma = 0.5;
};

struct Classification {
    Vector probabilities;
    std::size_t label = 0;
};

/// Softmax over cos(v, row_i) / tau across the ID rows; ties in the argmax
/// go to the lowest index.
Classification zero_shot_classify(std::span<const double> v, const Matrix& id_rows, double tau);

/// Max softmax probability over the ID rows, in [1/C, 1].
double mcm_score(std::span<const double> v, const Matrix& id_rows, double tau);

/// ID exponential-similarity mass over total mass, in (0, 1). All
/// exponentials share one max-subtraction across the ID and negative logits.
double neglabel_score(std::span<const double> v, const Matrix& id_rows, const Matrix& neg_rows, double tau);

/// Same scores from precomputed cosines.
double mcm_from_cosines(std::span<const double> id_cosines, double tau);
double neglabel_from_cosines(std::span<const double> id_cosines, std::span<const double> neg_cosines, double tau);

enum class Decision { Id, Ood };

Decision detect(double score, double gamma) noexcept;

/// neglabel_score for every row of `features`. Work is split across up to
/// `threads` workers (0 = use OODPROMPT_THREADS, else hardware
/// concurrency); the result does not depend on the thread count.
std::vector<double> neglabel_scores(const Matrix& features, const Matrix& id_rows, const Matrix& neg_rows,
                                    double tau, std::size_t threads = 0);

/// Thread cap from OODPROMPT_THREADS, falling back to hardware concurrency.
std::size_t scoring_threads();

} // namespace lapt
