// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lapt/linalg.hpp"

namespace lapt {

/// P(id score > ood score) with ties counted half, via midranks.
/// Throws EmptyInput if either side is empty.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

/// False positive rate at the largest threshold that keeps at least `level`
/// of the ID scores at or above it (the ceil(level * n)-th largest ID score;
/// no interpolation).
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double level = 0.95);

double id_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truth);

struct SplitMetrics {
    std::string name;
    double auroc = 0.0;
    double fpr95 = 0.0;
};

struct EvalReport {
    std::vector<SplitMetrics> splits;
    double id_accuracy = 0.0;
    /// Free-form echo of the producing configuration; serialized verbatim.
    std::string scheme;
    double tau = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::map<std::string, std::string> bank_hashes;
    std::string negative_mining;

    double mean_auroc() const;
    double mean_fpr95() const;
};

struct LabeledRows {
    std::string name;
    Matrix rows;
};

/// NegLabel scores for all rows; AUROC and FPR95 per OOD split with every ID
/// bank pooled as the ID side; ID accuracy by zero-shot classification of
/// the ID rows (`id_truth` aligned with the pooled ID rows, may be empty to
/// skip accuracy). class_rows holds the C ID rows followed by the negatives.
EvalReport evaluate(const std::vector<Matrix>& id_banks, std::span<const std::size_t> id_truth,
                    const std::vector<LabeledRows>& ood_banks, const Matrix& class_rows, std::size_t num_id,
                    double tau, std::size_t threads = 0);

std::string to_json(const EvalReport& report);

/// Fixed-width AUROC / FPR95 table, one column pair per split plus average.
std::string format_table(const EvalReport& report);

} // namespace lapt
