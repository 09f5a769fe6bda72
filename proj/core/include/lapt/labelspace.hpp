// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lapt/linalg.hpp"

namespace lapt {

/// ID labels and mined negative labels, each with a unit-norm anchor text
/// embedding. Class index k < C is ID; k >= C is negative.
class LabelSpace {
public:
    LabelSpace() = default;

    /// Validates disjointness, unit norms (1e-6) and count agreement.
    LabelSpace(std::vector<std::string> id_labels, Matrix id_anchors,
               std::vector<std::string> neg_labels, Matrix neg_anchors);

    std::size_t num_id() const noexcept { return id_labels_.size(); }
    std::size_t num_neg() const noexcept { return neg_labels_.size(); }
    std::size_t num_classes() const noexcept { return num_id() + num_neg(); }
    std::size_t dim() const noexcept { return id_anchors_.cols(); }

    const std::vector<std::string>& id_labels() const noexcept { return id_labels_; }
    const std::vector<std::string>& neg_labels() const noexcept { return neg_labels_; }
    const Matrix& id_anchors() const noexcept { return id_anchors_; }
    const Matrix& neg_anchors() const noexcept { return neg_anchors_; }

    bool is_id(std::size_t k) const noexcept { return k < num_id(); }
    const std::string& label(std::size_t k) const;
    std::span<const double> anchor(std::size_t k) const;

    /// Class index of `label`; throws IndexOutOfRange when absent.
    std::size_t index_of(const std::string& label) const;

    /// All C+M anchors stacked, ID rows first.
    Matrix all_anchors() const;

private:
    std::vector<std::string> id_labels_;
    Matrix id_anchors_;
    std::vector<std::string> neg_labels_;
    Matrix neg_anchors_;
};

/// Candidate vocabulary for negative mining.
struct CorpusBank {
    std::vector<std::string> words;
    Matrix embs;
};

struct NegativeSet {
    std::vector<std::string> labels;
    Matrix anchors;
    /// Affinity of each selected word, in selection order.
    std::vector<double> affinities;
};

/// Affinity of one candidate to the ID set: the `percentile` quantile
/// (nearest-rank) of its cosines to the ID anchors. percentile = 1 is the
/// maximum similarity.
double negative_affinity(std::span<const double> candidate, const Matrix& id_anchors,
                         double percentile);

/// Selects the `count` corpus words least similar to the ID set.
///
/// Words that literally equal an ID label are dropped first. Ranking is by
/// ascending affinity with lexicographic word order breaking ties, so the
/// result is a pure function of the inputs. Throws InsufficientCorpus when
/// fewer than `count` words remain, DimensionMismatch on D disagreement and
/// RangeError when percentile is outside (0, 1].
NegativeSet mine_negatives(const Matrix& id_anchors, const std::vector<std::string>& id_labels,
                           const CorpusBank& corpus, std::size_t count, double percentile);

} // namespace lapt
