// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lapt/bank.hpp"
#include "lapt/labelspace.hpp"
#include "lapt/linalg.hpp"

namespace lapt {

/// Knobs of the synthetic embedding world that stands in for the frozen
/// image/text encoders, the text-to-image generator and web retrieval.
///
/// Image features of class k are normalize(prototype_k + N(0, σ² I)). The
/// synthetic (generated) pool uses σ_syn and never mislabels; the retrieval
/// pool uses σ_ret and swaps a fraction η of its rows for samples of a
/// uniformly drawn other class. Small σ_syn with larger σ_ret and η > 0
/// gives the tight-but-uniform vs. diverse-but-noisy split between the two
/// sources.
struct ToyWorldConfig {
    std::size_t dim = 16;
    std::size_t num_id = 5;
    /// Negatives the default mining step will keep; sizes the corpus.
    std::size_t num_neg = 15;
    /// Non-ID words in the corpus; 0 means 4 * num_neg.
    std::size_t corpus_words = 0;
    double sigma_id = 0.25;
    double sigma_syn = 0.1;
    double sigma_ret = 0.4;
    double eta = 0.2;
    /// Candidates per class in each pool.
    std::size_t per_class = 16;
    /// Held-out test rows per ID class and per held-out OOD class.
    std::size_t test_per_class = 40;
    /// Held-out OOD classes in each test split.
    std::size_t ood_classes = 10;
    /// Near-OOD prototypes are normalize(p_id + near_ood_offset * g) with
    /// p_id a random ID prototype and g a random unit vector.
    double near_ood_offset = 0.8;
    /// Length of a shared offset added to every image feature before
    /// normalization (image/text modality gap). 0 keeps images centered on
    /// the text anchors.
    double modality_gap = 0.0;
    double max_prototype_cosine = 0.95;
    std::uint64_t seed = 0;

    std::size_t effective_corpus_words() const { return corpus_words == 0 ? 4 * num_neg : corpus_words; }

    /// Throws ConfigError on any invalid field.
    void validate() const;
};

/// Candidate pools for one class (an ID label or a corpus word).
struct ClassPools {
    std::string label;
    Matrix real;
    Matrix synthetic;
};

struct TestSplit {
    std::string name;
    Matrix rows;
};

struct ToyWorld {
    std::vector<std::string> id_labels;
    /// ID anchor text embeddings; in the toy world these are the prototypes.
    Matrix id_anchors;
    /// Every ID label followed by the non-ID words.
    CorpusBank corpus;
    /// One entry per corpus word, in corpus order.
    std::vector<ClassPools> pools;
    Matrix test_id;
    std::vector<std::size_t> test_id_class;
    std::vector<TestSplit> test_ood;
};

ToyWorld generate_toy_world(const ToyWorldConfig& cfg);

/// Output of the hybrid selection rule for one class.
struct CollectedClass {
    Matrix rows;
    std::vector<Provenance> provenance;
    std::vector<double> anchor_cosines;
};

/// Keeps real candidates whose cosine to the anchor strictly exceeds κ, best
/// first, up to n; fills the remainder with the best synthetic candidates.
/// Errors: RangeError unless 0 < κ < 1; EmptyInput for an empty synthetic
/// pool; InsufficientCandidates when fewer than n rows qualify.
CollectedClass hybrid_collect(const Matrix& real_pool, const Matrix& synth_pool,
                              std::span<const double> anchor, double kappa, std::size_t n);

struct ClassFeatures {
    std::size_t class_index = 0;
    Matrix rows;
    std::vector<Provenance> provenance;
};

/// Collected features with one-hot soft labels over the C+M classes.
struct TrainingSet {
    Matrix features;
    Matrix soft_labels;
    std::vector<std::size_t> class_index;
    std::vector<Provenance> provenance;

    std::size_t size() const noexcept { return features.rows(); }
};

/// Rows are re-normalized in 64-bit. Throws IndexOutOfRange for class
/// indices outside 0..C+M-1.
TrainingSet build_training_set(const std::vector<ClassFeatures>& per_class, const LabelSpace& space);

/// Bank views of the toy world, as written by the `toygen` stage.
struct ToyWorldBanks {
    EmbeddingBank id_anchors;
    EmbeddingBank corpus;
    EmbeddingBank pool_real;
    EmbeddingBank pool_synth;
    EmbeddingBank test_id;
    std::vector<std::pair<std::string, EmbeddingBank>> test_ood;
};

ToyWorldBanks to_banks(const ToyWorld& world);

/// Training set as a bank: label = class label, group id/neg.
EmbeddingBank training_set_bank(const TrainingSet& set, const LabelSpace& space);

/// Inverse of `training_set_bank`; labels must resolve in `space`.
TrainingSet training_set_from_bank(const EmbeddingBank& bank, const LabelSpace& space);

} // namespace lapt
