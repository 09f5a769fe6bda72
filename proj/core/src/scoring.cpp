// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "lapt/error.hpp"
#include "lapt/numeric.hpp"

namespace lapt {
namespace {

/// Rows with their norms, so batch scoring computes each norm once.
struct NormedRows {
    explicit NormedRows(const Matrix& m) : rows(m), norms(m.rows()) {
        for (std::size_t i = 0; i < m.rows(); ++i) norms[i] = norm(m.row(i));
    }
    const Matrix& rows;
    Vector norms;
};

void zero_vector() { fail(ErrorCode::ZeroVector, "cosine of a zero vector"); }

// Same arithmetic as cosine(), with the norms hoisted.
Vector cosines_to(std::span<const double> v, const NormedRows& r) {
    if (!r.rows.empty() && r.rows.cols() != v.size()) {
        fail(ErrorCode::DimensionMismatch, "feature dim " + std::to_string(v.size()) + " vs row dim " +
                                               std::to_string(r.rows.cols()));
    }
    Vector out(r.rows.rows());
    if (out.empty()) return out;
    const double nv = norm(v);
    if (!(nv > kZeroNormThreshold)) zero_vector();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(r.norms[i] > kZeroNormThreshold)) zero_vector();
        out[i] = std::clamp(dot(v, r.rows.row(i)) / (nv * r.norms[i]), -1.0, 1.0);
    }
    return out;
}

Vector cosines_to(std::span<const double> v, const Matrix& rows) { return cosines_to(v, NormedRows(rows)); }

void check_tau(double tau) {
    if (!(tau > 0.0)) {
        fail(ErrorCode::NonPositiveTemperature, "tau must be positive");
    }
}

} // namespace

Classification zero_shot_classify(std::span<const double> v, const Matrix& id_rows, double tau) {
    if (id_rows.empty()) {
        fail(ErrorCode::EmptyInput, "no ID rows");
    }
    Classification out;
    out.probabilities = softmax_temp(cosines_to(v, id_rows), tau);
    // max_element returns the first maximum, which is the lowest index.
    out.label = static_cast<std::size_t>(
        std::max_element(out.probabilities.begin(), out.probabilities.end()) - out.probabilities.begin());
    return out;
}

double mcm_from_cosines(std::span<const double> id_cosines, double tau) {
    if (id_cosines.empty()) {
        fail(ErrorCode::EmptyInput, "no ID cosines");
    }
    const Vector p = softmax_temp(id_cosines, tau);
    return *std::max_element(p.begin(), p.end());
}

double mcm_score(std::span<const double> v, const Matrix& id_rows, double tau) {
    return mcm_from_cosines(cosines_to(v, id_rows), tau);
}

double neglabel_from_cosines(std::span<const double> id_cosines, std::span<const double> neg_cosines, double tau) {
    check_tau(tau);
    if (id_cosines.empty() || neg_cosines.empty()) {
        fail(ErrorCode::EmptyInput, "NegLabel needs at least one ID and one negative row");
    }
    // Shifting by the cosine ceiling instead of the running maximum keeps every
    // step below monotone in each input, so the score is monotone bit for bit.
    long double id_mass = 0.0L;
    for (double c : id_cosines) id_mass += std::exp((static_cast<long double>(c) - 1.0L) / tau);
    long double neg_mass = 0.0L;
    for (double c : neg_cosines) neg_mass += std::exp((static_cast<long double>(c) - 1.0L) / tau);
    if (id_mass > 0.0L && std::isfinite(id_mass) && std::isfinite(neg_mass)) {
        return static_cast<double>(1.0L / (1.0L + neg_mass / id_mass));
    }
    // Extreme temperatures: fall back to the max-shifted form.
    double top = id_cosines[0];
    for (double c : id_cosines) top = std::max(top, c);
    for (double c : neg_cosines) top = std::max(top, c);
    double id_shifted = 0.0;
    for (double c : id_cosines) id_shifted += std::exp((c - top) / tau);
    double neg_shifted = 0.0;
    for (double c : neg_cosines) neg_shifted += std::exp((c - top) / tau);
    return 1.0 / (1.0 + neg_shifted / id_shifted);
}

double neglabel_score(std::span<const double> v, const Matrix& id_rows, const Matrix& neg_rows, double tau) {
    return neglabel_from_cosines(cosines_to(v, id_rows), cosines_to(v, neg_rows), tau);
}

Decision detect(double score, double gamma) noexcept { return score >= gamma ? Decision::Id : Decision::Ood; }

std::size_t scoring_threads() {
    if (const char* env = std::getenv("OODPROMPT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) {
            return static_cast<std::size_t>(v);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<double> neglabel_scores(const Matrix& features, const Matrix& id_rows, const Matrix& neg_rows,
                                    double tau, std::size_t threads) {
    check_tau(tau);
    const NormedRows id(id_rows);
    const NormedRows neg(neg_rows);
    std::vector<double> out(features.rows());
    const std::size_t workers = std::clamp<std::size_t>(threads == 0 ? scoring_threads() : threads, 1,
                                                        std::max<std::size_t>(1, features.rows() / 64));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = neglabel_from_cosines(cosines_to(features.row(i), id), cosines_to(features.row(i), neg), tau);
        }
    };
    if (workers == 1) {
        work(0, out.size());
        return out;
    }
    // Errors are raised on the calling thread by validating one row first.
    if (!out.empty()) {
        out[0] = neglabel_score(features.row(0), id_rows, neg_rows, tau);
    }
    {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (out.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = std::max<std::size_t>(1, w * chunk);
            const std::size_t end = std::min(out.size(), (w + 1) * chunk);
            if (begin < end) {
                pool.emplace_back(work, begin, end);
            }
        }
    }
    return out;
}

} // namespace lapt
