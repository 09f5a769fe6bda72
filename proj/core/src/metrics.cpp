// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "lapt/error.hpp"
#include "lapt/scoring.hpp"

namespace lapt {
namespace {

void require_nonempty(std::span<const double> id_scores, std::span<const double> ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) {
        fail(ErrorCode::EmptyInput, "metric needs nonempty ID and OOD score sets");
    }
}

} // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
    require_nonempty(id_scores, ood_scores);
    struct Entry {
        double score;
        bool is_id;
    };
    std::vector<Entry> all;
    all.reserve(id_scores.size() + ood_scores.size());
    for (double s : id_scores) all.push_back({s, true});
    for (double s : ood_scores) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // Mann-Whitney U with midranks for ties.
    double id_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        std::size_t id_in_run = 0;
        while (j < all.size() && all[j].score == all[i].score) {
            id_in_run += all[j].is_id ? 1 : 0;
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        id_rank_sum += midrank * static_cast<double>(id_in_run);
        i = j;
    }
    const auto n = static_cast<double>(id_scores.size());
    const auto m = static_cast<double>(ood_scores.size());
    return (id_rank_sum - n * (n + 1.0) / 2.0) / (n * m);
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double level) {
    require_nonempty(id_scores, ood_scores);
    if (!(level > 0.0 && level <= 1.0)) {
        fail(ErrorCode::RangeError, "TPR level must lie in (0, 1]");
    }
    std::vector<double> id(id_scores.begin(), id_scores.end());
    std::sort(id.begin(), id.end(), std::greater<>());
    const std::size_t n = id.size();
    // Smallest k with k / n >= level, evaluated with the same comparison a
    // threshold scan would use.
    auto covers = [&](std::size_t k) { return static_cast<double>(k) / static_cast<double>(n) >= level; };
    auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 1, n);
    while (k > 1 && covers(k - 1)) --k;
    while (k < n && !covers(k)) ++k;
    const double threshold = id[k - 1];
    const auto false_pos = std::count_if(ood_scores.begin(), ood_scores.end(),
                                         [&](double s) { return s >= threshold; });
    return static_cast<double>(false_pos) / static_cast<double>(ood_scores.size());
}

double id_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truth) {
    if (predictions.size() != truth.size()) {
        fail(ErrorCode::LengthMismatch, "predictions and labels differ in length");
    }
    if (predictions.empty()) {
        fail(ErrorCode::EmptyInput, "no predictions");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hits += predictions[i] == truth[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double EvalReport::mean_auroc() const {
    if (splits.empty()) return 0.0;
    double s = 0.0;
    for (const auto& m : splits) s += m.auroc;
    return s / static_cast<double>(splits.size());
}

double EvalReport::mean_fpr95() const {
    if (splits.empty()) return 0.0;
    double s = 0.0;
    for (const auto& m : splits) s += m.fpr95;
    return s / static_cast<double>(splits.size());
}

EvalReport evaluate(const std::vector<Matrix>& id_banks, std::span<const std::size_t> id_truth,
                    const std::vector<LabeledRows>& ood_banks, const Matrix& class_rows, std::size_t num_id,
                    double tau, std::size_t threads) {
    if (num_id == 0 || num_id >= class_rows.rows()) {
        fail(ErrorCode::ConfigError, "class rows must hold C >= 1 ID rows and M >= 1 negatives");
    }
    Matrix id_rows(0, class_rows.cols());
    Matrix neg_rows(0, class_rows.cols());
    for (std::size_t k = 0; k < class_rows.rows(); ++k) {
        (k < num_id ? id_rows : neg_rows).append_row(class_rows.row(k));
    }

    Matrix pooled(0, class_rows.cols());
    for (const Matrix& bank : id_banks) {
        for (std::size_t i = 0; i < bank.rows(); ++i) {
            pooled.append_row(bank.row(i));
        }
    }
    const std::vector<double> id_scores = neglabel_scores(pooled, id_rows, neg_rows, tau, threads);

    EvalReport report;
    report.tau = tau;
    for (const auto& ood : ood_banks) {
        const std::vector<double> ood_scores = neglabel_scores(ood.rows, id_rows, neg_rows, tau, threads);
        report.splits.push_back({ood.name, auroc(id_scores, ood_scores), fpr_at_tpr(id_scores, ood_scores, 0.95)});
    }
    if (!id_truth.empty()) {
        if (id_truth.size() != pooled.rows()) {
            fail(ErrorCode::LengthMismatch, "ID truth labels must align with pooled ID rows");
        }
        std::vector<std::size_t> predictions(pooled.rows());
        for (std::size_t i = 0; i < pooled.rows(); ++i) {
            predictions[i] = zero_shot_classify(pooled.row(i), id_rows, tau).label;
        }
        report.id_accuracy = id_accuracy(predictions, id_truth);
    }
    return report;
}

std::string to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    auto splits = nlohmann::ordered_json::array();
    for (const auto& s : report.splits) {
        splits.push_back({{"name", s.name}, {"auroc", s.auroc}, {"fpr95", s.fpr95}});
    }
    j["splits"] = std::move(splits);
    j["mean_auroc"] = report.mean_auroc();
    j["mean_fpr95"] = report.mean_fpr95();
    j["id_accuracy"] = report.id_accuracy;
    j["config"] = {{"scheme", report.scheme},
                   {"tau", report.tau},
                   {"seed", report.seed},
                   {"config_hash", report.config_hash},
                   {"bank_hashes", report.bank_hashes},
                   {"negative_mining", report.negative_mining}};
    return j.dump(2) + "\n";
}

std::string format_table(const EvalReport& report) {
    std::string header1 = "                     ";
    std::string header2 = "Method               ";
    std::string body;
    char cell[64];
    std::snprintf(cell, sizeof cell, "%-20.20s ", report.scheme.c_str());
    body = cell;
    auto column = [&](const std::string& name, double auc, double fpr) {
        std::snprintf(cell, sizeof cell, "%-18.18s", name.c_str());
        header1 += cell;
        header2 += "AUROC↑   FPR95↓   ";
        std::snprintf(cell, sizeof cell, "%6.2f   %6.2f   ", 100.0 * auc, 100.0 * fpr);
        body += cell;
    };
    for (const auto& s : report.splits) {
        column(s.name, s.auroc, s.fpr95);
    }
    column("Average", report.mean_auroc(), report.mean_fpr95());
    std::snprintf(cell, sizeof cell, "ID ACC %6.2f\n", 100.0 * report.id_accuracy);
    return header1 + "\n" + header2 + "\n" + body + "\n" + cell;
}

} // namespace lapt
