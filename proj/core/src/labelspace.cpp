// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/labelspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "lapt/error.hpp"
#include "lapt/numeric.hpp"

namespace lapt {
namespace {

void check_unit_rows(const Matrix& m, const char* what) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double n = norm(m.row(i));
        if (std::abs(n - 1.0) > 1e-6) {
            fail(ErrorCode::NormViolation, std::string(what) + " row " + std::to_string(i) +
                                               " has norm " + std::to_string(n));
        }
    }
}

} // namespace

LabelSpace::LabelSpace(std::vector<std::string> id_labels, Matrix id_anchors,
                       std::vector<std::string> neg_labels, Matrix neg_anchors)
    : id_labels_(std::move(id_labels)), id_anchors_(std::move(id_anchors)),
      neg_labels_(std::move(neg_labels)), neg_anchors_(std::move(neg_anchors)) {
    if (id_labels_.size() != id_anchors_.rows() || neg_labels_.size() != neg_anchors_.rows()) {
        fail(ErrorCode::LengthMismatch, "label and anchor counts disagree");
    }
    if (!neg_anchors_.empty() && !id_anchors_.empty() && neg_anchors_.cols() != id_anchors_.cols()) {
        fail(ErrorCode::DimensionMismatch, "ID and negative anchors differ in dimension");
    }
    check_unit_rows(id_anchors_, "ID anchor");
    check_unit_rows(neg_anchors_, "negative anchor");
    std::unordered_set<std::string> seen;
    for (const auto& l : id_labels_) {
        if (!seen.insert(l).second) {
            fail(ErrorCode::ConfigError, "duplicate ID label '" + l + "'");
        }
    }
    for (const auto& l : neg_labels_) {
        if (!seen.insert(l).second) {
            fail(ErrorCode::ConfigError, "negative label '" + l + "' collides with another label");
        }
    }
}

const std::string& LabelSpace::label(std::size_t k) const {
    if (k >= num_classes()) {
        fail(ErrorCode::IndexOutOfRange, "class index " + std::to_string(k));
    }
    return is_id(k) ? id_labels_[k] : neg_labels_[k - num_id()];
}

std::span<const double> LabelSpace::anchor(std::size_t k) const {
    if (k >= num_classes()) {
        fail(ErrorCode::IndexOutOfRange, "class index " + std::to_string(k));
    }
    return is_id(k) ? id_anchors_.row(k) : neg_anchors_.row(k - num_id());
}

std::size_t LabelSpace::index_of(const std::string& label) const {
    for (std::size_t k = 0; k < num_classes(); ++k) {
        if (this->label(k) == label) {
            return k;
        }
    }
    fail(ErrorCode::IndexOutOfRange, "unknown label '" + label + "'");
}

Matrix LabelSpace::all_anchors() const {
    Matrix out;
    for (std::size_t k = 0; k < num_classes(); ++k) {
        out.append_row(anchor(k));
    }
    return out;
}

double negative_affinity(std::span<const double> candidate, const Matrix& id_anchors,
                         double percentile) {
    if (!(percentile > 0.0 && percentile <= 1.0)) {
        fail(ErrorCode::RangeError, "percentile must lie in (0, 1]");
    }
    if (id_anchors.empty()) {
        fail(ErrorCode::EmptyInput, "no ID anchors");
    }
    std::vector<double> sims(id_anchors.rows());
    for (std::size_t i = 0; i < id_anchors.rows(); ++i) {
        sims[i] = cosine(candidate, id_anchors.row(i));
    }
    std::sort(sims.begin(), sims.end());
    const auto rank = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(sims.size())));
    return sims[std::clamp<std::size_t>(rank, 1, sims.size()) - 1];
}

NegativeSet mine_negatives(const Matrix& id_anchors, const std::vector<std::string>& id_labels,
                           const CorpusBank& corpus, std::size_t count, double percentile) {
    if (!(percentile > 0.0 && percentile <= 1.0)) {
        fail(ErrorCode::RangeError, "percentile must lie in (0, 1]");
    }
    if (corpus.words.size() != corpus.embs.rows()) {
        fail(ErrorCode::LengthMismatch, "corpus words and embeddings disagree");
    }
    if (!corpus.embs.empty() && corpus.embs.cols() != id_anchors.cols()) {
        fail(ErrorCode::DimensionMismatch, "corpus dimension " + std::to_string(corpus.embs.cols()) +
                                               " vs ID dimension " + std::to_string(id_anchors.cols()));
    }
    NegativeSet out;
    out.anchors = Matrix(0, id_anchors.cols());
    if (count == 0) {
        return out;
    }

    const std::unordered_set<std::string> id_set(id_labels.begin(), id_labels.end());
    struct Candidate {
        double affinity;
        std::size_t row;
    };
    std::vector<Candidate> eligible;
    for (std::size_t w = 0; w < corpus.words.size(); ++w) {
        if (id_set.contains(corpus.words[w])) {
            continue;
        }
        eligible.push_back({negative_affinity(corpus.embs.row(w), id_anchors, percentile), w});
    }
    if (eligible.size() < count) {
        fail(ErrorCode::InsufficientCorpus, "need " + std::to_string(count) + " eligible words, have " +
                                                std::to_string(eligible.size()));
    }
    std::sort(eligible.begin(), eligible.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.affinity != b.affinity) {
            return a.affinity < b.affinity;
        }
        return corpus.words[a.row] < corpus.words[b.row];
    });
    for (std::size_t i = 0; i < count; ++i) {
        const auto& c = eligible[i];
        out.labels.push_back(corpus.words[c.row]);
        out.anchors.append_row(l2_normalize(corpus.embs.row(c.row)));
        out.affinities.push_back(c.affinity);
    }
    return out;
}

} // namespace lapt
