// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "lapt/error.hpp"
#include "lapt/numeric.hpp"

namespace lapt {
namespace {

constexpr int kMaxLambdaRedraws = 64;

/// Draws λ and applies `mix`, redrawing λ while the mix collapses to zero.
template <class Mix>
auto mix_with_redraw(double shape, RngStream& rng, Mix mix) {
    for (int attempt = 0;; ++attempt) {
        const double lambda = sample_beta(shape, rng);
        try {
            return mix(lambda);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ZeroVector || attempt + 1 >= kMaxLambdaRedraws) {
                throw;
            }
        }
    }
}

LabeledBatch take_rows(const TrainingSet& set, const std::vector<std::size_t>& rows) {
    LabeledBatch b{Matrix(0, set.features.cols()), Matrix(0, set.soft_labels.cols())};
    for (std::size_t i : rows) {
        b.features.append_row(set.features.row(i));
        b.labels.append_row(set.soft_labels.row(i));
    }
    return b;
}

} // namespace

void TrainConfig::validate() const {
    auto bad = [](const std::string& what) { fail(ErrorCode::ConfigError, what); };
    if (!(lr0 > 0.0)) bad("lr0 must be positive");
    if (batch_size == 0) bad("batch_size must be positive");
    if (!(tau > 0.0)) bad("tau must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) bad("alpha must be positive");
    if (!(beta > 0.0) || !std::isfinite(beta)) bad("beta must be positive");
}

CeResult ce_loss(const Matrix& features, const Matrix& soft_labels, const Matrix& class_rows, double tau) {
    if (!(tau > 0.0)) {
        fail(ErrorCode::NonPositiveTemperature, "tau must be positive");
    }
    if (features.empty()) {
        fail(ErrorCode::EmptyInput, "empty batch");
    }
    if (features.cols() != class_rows.cols() || soft_labels.rows() != features.rows() ||
        soft_labels.cols() != class_rows.rows()) {
        fail(ErrorCode::DimensionMismatch, "features, labels and class rows disagree in shape");
    }
    const std::size_t batch = features.rows();
    const std::size_t classes = class_rows.rows();
    const std::size_t dim = class_rows.cols();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    CeResult out{0.0, Matrix(classes, dim)};
    Vector logits(classes);
    Vector weights(classes);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto v = features.row(b);
        const auto l = soft_labels.row(b);
        for (std::size_t i = 0; i < classes; ++i) {
            logits[i] = dot(v, class_rows.row(i)) / tau;
        }
        const auto top_it = std::max_element(logits.begin(), logits.end());
        const std::size_t top_index = static_cast<std::size_t>(top_it - logits.begin());
        const double top = *top_it;
        // rest = sum of exp(logit - top) over everything but the top class, so
        // Z = 1 + rest and log Z = log1p(rest) stay accurate when the softmax
        // saturates.
        double rest = 0.0;
        double label_mass = 0.0;
        for (std::size_t i = 0; i < classes; ++i) {
            weights[i] = i == top_index ? 1.0 : std::exp(logits[i] - top);
            if (i != top_index) rest += weights[i];
            label_mass += l[i];
        }
        const double z = 1.0 + rest;
        const double log_z = std::log1p(rest);
        double sample_loss = 0.0;
        for (std::size_t i = 0; i < classes; ++i) {
            if (l[i] != 0.0) {
                sample_loss += l[i] * (log_z - (logits[i] - top));
            }
        }
        out.loss += sample_loss * inv_batch;
        for (std::size_t i = 0; i < classes; ++i) {
            // p_i * sum(l) - l_i, rearranged as p_i * (sum(l) - l_i) - l_i * (1 - p_i)
            // with 1 - p_i formed from the other classes' weights.
            const double p = weights[i] / z;
            const double others = i == top_index ? rest : z - weights[i];
            const double dlogit = (p * (label_mass - l[i]) - l[i] * (others / z)) * inv_batch / tau;
            if (dlogit == 0.0) {
                continue;
            }
            auto g = out.grad_rows.row(i);
            for (std::size_t d = 0; d < dim; ++d) {
                g[d] += dlogit * v[d];
            }
        }
    }
    return out;
}

Vector mix_cross_modal_at(std::span<const double> feature, std::span<const double> anchor, double lambda) {
    if (feature.size() != anchor.size()) {
        fail(ErrorCode::DimensionMismatch, "feature and anchor dimensions disagree");
    }
    if (lambda == 1.0) {
        return Vector(feature.begin(), feature.end());
    }
    if (lambda == 0.0) {
        return Vector(anchor.begin(), anchor.end());
    }
    Vector out(feature.size());
    for (std::size_t d = 0; d < out.size(); ++d) {
        out[d] = lambda * feature[d] + (1.0 - lambda) * anchor[d];
    }
    l2_normalize_inplace(out);
    return out;
}

LabeledBatch mix_cross_modal(const LabeledBatch& batch, const std::vector<std::size_t>& classes,
                             const LabelSpace& space, double alpha, RngStream& rng) {
    if (classes.size() != batch.size()) {
        fail(ErrorCode::LengthMismatch, "one class index per row required");
    }
    LabeledBatch out{Matrix(0, batch.features.cols()), batch.labels};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto anchor = space.anchor(classes[i]);
        out.features.append_row(mix_with_redraw(alpha, rng, [&](double lambda) {
            return mix_cross_modal_at(batch.features.row(i), anchor, lambda);
        }));
    }
    return out;
}

MixedSample mix_cross_distribution_at(std::span<const double> id_feature, std::span<const double> id_label,
                                      std::span<const double> neg_feature, std::span<const double> neg_label,
                                      double lambda) {
    if (id_feature.size() != neg_feature.size() || id_label.size() != neg_label.size()) {
        fail(ErrorCode::DimensionMismatch, "ID and negative samples disagree in shape");
    }
    if (lambda == 1.0) {
        return {Vector(id_feature.begin(), id_feature.end()), Vector(id_label.begin(), id_label.end())};
    }
    if (lambda == 0.0) {
        return {Vector(neg_feature.begin(), neg_feature.end()), Vector(neg_label.begin(), neg_label.end())};
    }
    MixedSample out{Vector(id_feature.size()), Vector(id_label.size())};
    for (std::size_t d = 0; d < out.feature.size(); ++d) {
        out.feature[d] = lambda * id_feature[d] + (1.0 - lambda) * neg_feature[d];
    }
    l2_normalize_inplace(out.feature);
    for (std::size_t i = 0; i < out.label.size(); ++i) {
        out.label[i] = lambda * id_label[i] + (1.0 - lambda) * neg_label[i];
    }
    return out;
}

LabeledBatch mix_cross_distribution(const LabeledBatch& id_batch, const LabeledBatch& neg_batch, double beta,
                                    RngStream& rng) {
    if (id_batch.size() == 0 || neg_batch.size() == 0) {
        fail(ErrorCode::EmptyInput, "cross-distribution mixing needs ID and negative rows");
    }
    LabeledBatch out{Matrix(0, id_batch.features.cols()), Matrix(0, id_batch.labels.cols())};
    for (std::size_t i = 0; i < id_batch.size(); ++i) {
        const std::size_t j = rng.uniform_index(neg_batch.size());
        const MixedSample s = mix_with_redraw(beta, rng, [&](double lambda) {
            return mix_cross_distribution_at(id_batch.features.row(i), id_batch.labels.row(i),
                                             neg_batch.features.row(j), neg_batch.labels.row(j), lambda);
        });
        out.features.append_row(s.feature);
        out.labels.append_row(s.label);
    }
    return out;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
    if (total_steps < 1 || step > total_steps) {
        fail(ErrorCode::RangeError, "cosine_lr needs 0 <= step <= total_steps and total_steps >= 1");
    }
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

StepBatches prepare_step(const TrainingSet& set, const std::vector<std::size_t>& indices,
                         const LabelSpace& space, const TrainConfig& cfg, RngStream& mixing) {
    StepBatches out;
    out.plain = take_rows(set, indices);

    std::vector<std::size_t> classes;
    std::vector<std::size_t> id_rows;
    std::vector<std::size_t> neg_rows;
    for (std::size_t i : indices) {
        classes.push_back(set.class_index[i]);
        (space.is_id(set.class_index[i]) ? id_rows : neg_rows).push_back(i);
    }
    out.cross_modal = mix_cross_modal(out.plain, classes, space, cfg.alpha, mixing);

    if (neg_rows.empty()) {
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (!space.is_id(set.class_index[i])) {
                neg_rows.push_back(i);
            }
        }
    }
    if (id_rows.empty() || neg_rows.empty()) {
        out.cross_dist = {Matrix(0, set.features.cols()), Matrix(0, set.soft_labels.cols())};
    } else {
        out.cross_dist = mix_cross_distribution(take_rows(set, id_rows), take_rows(set, neg_rows), cfg.beta, mixing);
    }
    return out;
}

ObjectiveResult evaluate_objective(const PromptParams& params, const LabelSpace& space,
                                   const StepBatches& batches, double tau, LossTerms terms) {
    const Matrix rows = class_embeddings(params, space);
    Matrix grad_rows(rows.rows(), rows.cols());
    ObjectiveResult out;

    auto add_term = [&](const LabeledBatch& b, double& slot) {
        if (b.size() == 0) {
            return;
        }
        CeResult r = ce_loss(b.features, b.labels, rows, tau);
        slot = r.loss;
        auto dst = grad_rows.data();
        auto src = r.grad_rows.data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    };
    if (terms.plain) add_term(batches.plain, out.losses.plain);
    if (terms.cross_modal) add_term(batches.cross_modal, out.losses.cross_modal);
    if (terms.cross_dist) add_term(batches.cross_dist, out.losses.cross_dist);
    out.losses.total = out.losses.plain + out.losses.cross_modal + out.losses.cross_dist;
    out.token_grads = class_embeddings_backward(params, space, grad_rows);
    return out;
}

std::string to_jsonl(const TraceRecord& r) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["batch"] = r.batch;
    j["L"] = r.losses.plain;
    j["L_cm"] = r.losses.cross_modal;
    j["L_cd"] = r.losses.cross_dist;
    j["L_all"] = r.losses.total;
    j["lr"] = r.lr;
    return j.dump();
}

TrainResult train_prompts(const PromptParams& initial, const TrainingSet& set, const LabelSpace& space,
                          const TrainConfig& cfg) {
    cfg.validate();
    TrainResult out{initial, {}, {}};
    if (cfg.epochs == 0) {
        return out;
    }
    if (set.size() == 0) {
        fail(ErrorCode::EmptyInput, "training set is empty");
    }
    if (set.features.cols() != space.dim() || set.soft_labels.cols() != space.num_classes()) {
        fail(ErrorCode::DimensionMismatch, "training set does not match the label space");
    }
    initial.validate(space.num_classes());

    RngStream order_rng(cfg.seed, RngPurpose::BatchOrder);
    RngStream mixing_rng(cfg.seed, RngPurpose::Mixing);
    const std::size_t per_epoch = (set.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = per_epoch * cfg.epochs;

    std::vector<std::size_t> order(set.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[order_rng.uniform_index(i)]);
        }
        double epoch_sum = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const auto first = order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size);
            const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(set.size(), (b + 1) * cfg.batch_size));
            const std::vector<std::size_t> indices(first, last);

            const StepBatches batches = prepare_step(set, indices, space, cfg, mixing_rng);
            const ObjectiveResult obj = evaluate_objective(out.params, space, batches, cfg.tau);
            if (!std::isfinite(obj.losses.total)) {
                fail(ErrorCode::NumericFailure, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                                    std::to_string(b));
            }
            const double lr = cosine_lr(step, total_steps, cfg.lr0);
            for (std::size_t s = 0; s < out.params.token_sets.size(); ++s) {
                auto w = out.params.token_sets[s].data();
                auto g = obj.token_grads[s].data();
                for (std::size_t i = 0; i < w.size(); ++i) {
                    w[i] -= lr * g[i];
                    if (!std::isfinite(w[i])) {
                        fail(ErrorCode::NumericFailure, "prompt tokens diverged at epoch " + std::to_string(epoch) +
                                                            ", batch " + std::to_string(b));
                    }
                }
            }
            out.trace.push_back({epoch, b, obj.losses, lr});
            epoch_sum += obj.losses.total;
            ++step;
        }
        out.epoch_loss.push_back(epoch_sum / static_cast<double>(per_epoch));
    }
    return out;
}

} // namespace lapt
