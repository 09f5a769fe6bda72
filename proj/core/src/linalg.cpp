// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/linalg.hpp"

#include <cmath>

#include "lapt/error.hpp"

namespace lapt {

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) {
        cols_ = values.size();
    }
    if (values.size() != cols_) {
        fail(ErrorCode::DimensionMismatch, "append_row: expected " + std::to_string(cols_) +
                                               " columns, got " + std::to_string(values.size()));
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        fail(ErrorCode::DimensionMismatch, "dot: lengths " + std::to_string(a.size()) + " and " +
                                               std::to_string(b.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

} // namespace lapt
