// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lapt/collection.hpp"
#include "lapt/labelspace.hpp"
#include "lapt/linalg.hpp"
#include "lapt/prompts.hpp"
#include "lapt/rng.hpp"

namespace lapt {

struct TrainConfig {
    double lr0 = 1e-2;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double tau = 0.01;
    /// Beta(α, α) for cross-modal mixing.
    double alpha = 1.0;
    /// Beta(β, β) for cross-distribution mixing.
    double beta = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-batch objective terms. total = plain + cross_modal + cross_dist.
struct LossBreakdown {
    double plain = 0.0;
    double cross_modal = 0.0;
    double cross_dist = 0.0;
    double total = 0.0;
};

/// Unit-norm feature rows with soft labels over the C+M classes.
struct LabeledBatch {
    Matrix features;
    Matrix labels;

    std::size_t size() const noexcept { return features.rows(); }
};

struct CeResult {
    double loss = 0.0;
    /// dLoss / d class_rows, (C+M) x D.
    Matrix grad_rows;
};

/// Soft-label cross-entropy of softmax(cos(v, row_i) / tau), averaged over
/// the batch. Features and rows are assumed unit-norm, so the logits are
/// plain inner products and the gradient is taken with respect to the rows
/// as given. Errors: DimensionMismatch, NonPositiveTemperature, EmptyInput.
CeResult ce_loss(const Matrix& features, const Matrix& soft_labels, const Matrix& class_rows, double tau);

/// normalize(λ v + (1 - λ) anchor). λ = 1 returns v and λ = 0 returns the
/// anchor, bit for bit. Throws ZeroVector on an exact antipodal collision.
Vector mix_cross_modal_at(std::span<const double> feature, std::span<const double> anchor, double lambda);

/// Mixes every row with the anchor of its class using a fresh λ ~ Beta(α, α)
/// per row; labels are copied unchanged. A λ that lands on an antipodal
/// collision is redrawn.
LabeledBatch mix_cross_modal(const LabeledBatch& batch, const std::vector<std::size_t>& classes,
                             const LabelSpace& space, double alpha, RngStream& rng);

struct MixedSample {
    Vector feature;
    Vector label;
};

/// Feature normalize(λ v_id + (1 - λ) v_ood) and label λ l_id + (1 - λ) l_ood.
/// λ = 1 returns the ID pair and λ = 0 the negative pair, bit for bit.
MixedSample mix_cross_distribution_at(std::span<const double> id_feature, std::span<const double> id_label,
                                      std::span<const double> neg_feature, std::span<const double> neg_label,
                                      double lambda);

/// Pairs every ID row with a uniformly drawn negative row and mixes with a
/// fresh λ ~ Beta(β, β) per pair. Throws EmptyInput if either side is empty.
LabeledBatch mix_cross_distribution(const LabeledBatch& id_batch, const LabeledBatch& neg_batch, double beta,
                                    RngStream& rng);

/// lr0 * (1 + cos(π step / total)) / 2. RangeError unless
/// 0 <= step <= total and total >= 1.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

/// The three batches one optimizer step is evaluated on. The cross-
/// distribution batch is empty when the source batch has no ID rows.
struct StepBatches {
    LabeledBatch plain;
    LabeledBatch cross_modal;
    LabeledBatch cross_dist;
};

/// Draws the mixed batches for the rows `indices` of `set`. Negative
/// partners come from the negative rows of the same batch, or from all
/// negative rows of `set` when the batch has none.
StepBatches prepare_step(const TrainingSet& set, const std::vector<std::size_t>& indices,
                         const LabelSpace& space, const TrainConfig& cfg, RngStream& mixing);

/// Which loss terms enter the objective; all three by default.
struct LossTerms {
    bool plain = true;
    bool cross_modal = true;
    bool cross_dist = true;
};

struct ObjectiveResult {
    LossBreakdown losses;
    /// dTotal / dToken for every token set of the prompt parameters.
    std::vector<Matrix> token_grads;
};

/// Evaluates the enabled terms on fixed batches and back-propagates their
/// sum into the prompt tokens.
ObjectiveResult evaluate_objective(const PromptParams& params, const LabelSpace& space,
                                   const StepBatches& batches, double tau, LossTerms terms = {});

struct TraceRecord {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    LossBreakdown losses;
    double lr = 0.0;
};

/// {"epoch", "batch", "L", "L_cm", "L_cd", "L_all", "lr"} on one line.
std::string to_jsonl(const TraceRecord& record);

struct TrainResult {
    PromptParams params;
    /// Mean total loss per epoch.
    std::vector<double> epoch_loss;
    std::vector<TraceRecord> trace;
};

/// Plain SGD over shuffled mini-batches with a per-step cosine schedule.
/// Deterministic for a given config seed: batch order uses the batch-order
/// stream and all mixing draws use the mixing stream.
TrainResult train_prompts(const PromptParams& initial, const TrainingSet& set, const LabelSpace& space,
                          const TrainConfig& cfg);

} // namespace lapt
