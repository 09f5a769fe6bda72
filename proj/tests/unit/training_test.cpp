// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "lapt/collection.hpp"
#include "lapt/error.hpp"
#include "lapt/labelspace.hpp"
#include "lapt/numeric.hpp"
#include "lapt/training.hpp"
#include "support/oracles.hpp"

namespace lapt {
namespace {

constexpr PromptScheme kSchemes[] = {PromptScheme::Unified, PromptScheme::ClassSpecific,
                                     PromptScheme::DistributionAware};

bool bit_equal(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    }
    return true;
}

Matrix one_hot(std::size_t rows, std::size_t cols, std::size_t hot) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) m(r, hot) = 1.0;
    return m;
}

/// Small labelled set over a random label space: `per_class` rows around each anchor.
TrainingSet small_set(std::mt19937_64& gen, const LabelSpace& space, std::size_t per_class) {
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<ClassFeatures> groups;
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        ClassFeatures g{k, Matrix(0, space.dim()), {}};
        for (std::size_t i = 0; i < per_class; ++i) {
            Vector v(space.anchor(k).begin(), space.anchor(k).end());
            for (double& x : v) x += n(gen);
            g.rows.append_row(l2_normalize(v));
            g.provenance.push_back(Provenance::Synthetic);
        }
        groups.push_back(std::move(g));
    }
    return build_training_set(groups, space);
}

TEST(CeLoss, UniformSoftmaxGivesLogClassCount) {
    // Orthonormal class rows; the feature has equal cosine to all of them.
    const std::size_t k = 6;
    Matrix rows(k, k);
    for (std::size_t i = 0; i < k; ++i) rows(i, i) = 1.0;
    Matrix v(1, k, 1.0 / std::sqrt(static_cast<double>(k)));
    for (double tau : {0.01, 0.5, 3.0}) {
        EXPECT_NEAR(ce_loss(v, one_hot(1, k, 2), rows, tau).loss, std::log(6.0), 1e-12);
    }
}

TEST(CeLoss, TwoClassValue) {
    Matrix rows(2, 2);
    rows(0, 0) = 1.0;
    rows(1, 1) = 1.0;
    Matrix v(1, 2);
    v(0, 0) = 1.0;
    const double loss = ce_loss(v, one_hot(1, 2, 0), rows, 1.0).loss;
    const double e = std::exp(1.0);
    EXPECT_NEAR(loss, -std::log(e / (e + 1.0)), 1e-15);
    EXPECT_NEAR(loss, 0.31326, 5e-6);
}

TEST(CeLoss, MatchesReferenceAndFiniteDifferences) {
    std::mt19937_64 gen(10);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix rows = oracle::random_units(gen, 4, 5);
        const Matrix feats = oracle::random_units(gen, 6, 5);
        Matrix labels(6, 4);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t b = 0; b < 6; ++b) {
            const double lam = u(gen);
            labels(b, b % 4) += lam;
            labels(b, (b + 1) % 4) += 1.0 - lam;
        }
        const double tau = trial % 2 == 0 ? 0.1 : 0.5;
        const CeResult r = ce_loss(feats, labels, rows, tau);
        EXPECT_NEAR(r.loss, oracle::soft_ce(feats, labels, rows, tau), 1e-12);

        double scale = 0.0;
        for (double g : r.grad_rows.data()) scale = std::max(scale, std::abs(g));
        double worst = 0.0;
        Matrix probe = rows;
        for (std::size_t i = 0; i < probe.data().size(); ++i) {
            const double saved = probe.data()[i];
            probe.data()[i] = saved + 1e-5;
            const double up = oracle::soft_ce(feats, labels, probe, tau);
            probe.data()[i] = saved - 1e-5;
            const double down = oracle::soft_ce(feats, labels, probe, tau);
            probe.data()[i] = saved;
            const double fd = (up - down) / 2e-5;
            const double a = r.grad_rows.data()[i];
            worst = std::max(worst, std::abs(fd - a) / std::max({std::abs(a), std::abs(fd), 1e-3 * scale}));
        }
        EXPECT_LT(worst, 1e-5) << "trial " << trial;
    }
}

TEST(CeLoss, Errors) {
    const Matrix rows(2, 3, 0.5);
    EXPECT_THROW((void)ce_loss(Matrix(0, 3), Matrix(0, 2), rows, 1.0), Error);
    EXPECT_THROW((void)ce_loss(Matrix(1, 2), Matrix(1, 2), rows, 1.0), Error);
    EXPECT_THROW((void)ce_loss(Matrix(1, 3), Matrix(1, 2), rows, 0.0), Error);
}

TEST(CrossModalMix, Endpoints) {
    const Vector v = l2_normalize(Vector{0.3, -0.2, 0.9});
    const Vector a = l2_normalize(Vector{-1.0, 0.4, 0.1});
    EXPECT_TRUE(bit_equal(mix_cross_modal_at(v, a, 1.0), v));
    EXPECT_TRUE(bit_equal(mix_cross_modal_at(v, a, 0.0), a));
}

TEST(CrossModalMix, Midpoint) {
    const Vector m = mix_cross_modal_at(Vector{1.0, 0.0}, Vector{0.0, 1.0}, 0.5);
    EXPECT_NEAR(m[0], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(m[1], 0.70711, 5e-6);
}

TEST(CrossDistributionMix, Endpoints) {
    const Vector vi = l2_normalize(Vector{0.3, -0.2, 0.9});
    const Vector vo = l2_normalize(Vector{-1.0, 0.4, 0.1});
    const Vector li = {1.0, 0.0, 0.0};
    const Vector lo = {0.0, 0.0, 1.0};
    const MixedSample one = mix_cross_distribution_at(vi, li, vo, lo, 1.0);
    EXPECT_TRUE(bit_equal(one.feature, vi));
    EXPECT_TRUE(bit_equal(one.label, li));
    const MixedSample zero = mix_cross_distribution_at(vi, li, vo, lo, 0.0);
    EXPECT_TRUE(bit_equal(zero.feature, vo));
    EXPECT_TRUE(bit_equal(zero.label, lo));
}

TEST(CrossDistributionMix, LabelArithmetic) {
    // C = 2, M = 2; ID label e_0, negative label e_C.
    const Vector li = {1.0, 0.0, 0.0, 0.0};
    const Vector lo = {0.0, 0.0, 1.0, 0.0};
    const MixedSample s = mix_cross_distribution_at(Vector{1.0, 0.0}, li, Vector{0.0, 1.0}, lo, 0.25);
    EXPECT_EQ(s.label, (Vector{0.25, 0.0, 0.75, 0.0}));
}

TEST(CrossDistributionMix, OrthogonalMidpointIsUnit) {
    const MixedSample s = mix_cross_distribution_at(Vector{1.0, 0.0, 0.0}, Vector{1.0, 0.0},
                                                    Vector{0.0, 0.0, 1.0}, Vector{0.0, 1.0}, 0.5);
    EXPECT_NEAR(s.feature[0], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(s.feature[2], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(norm(s.feature), 1.0, 1e-15);
}

TEST(Mixing, RandomDrawsKeepContracts) {
    std::mt19937_64 gen(12);
    RngStream rng(3, RngPurpose::Mixing);
    const LabelSpace space = oracle::random_space(gen, 3, 4, 6);
    TrainConfig cfg;
    const TrainingSet set = small_set(gen, space, 5);
    std::size_t draws = 0;
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    while (draws < 10000) {
        std::vector<std::size_t> idx(8);
        for (auto& i : idx) i = pick(gen);
        const StepBatches b = prepare_step(set, idx, space, cfg, rng);
        for (const LabeledBatch* batch : {&b.cross_modal, &b.cross_dist}) {
            for (std::size_t r = 0; r < batch->size(); ++r) {
                ASSERT_NEAR(norm(batch->features.row(r)), 1.0, 1e-9);
                double sum = 0.0;
                std::size_t support = 0;
                for (double l : batch->labels.row(r)) {
                    ASSERT_GE(l, 0.0);
                    sum += l;
                    support += l > 0.0 ? 1 : 0;
                }
                ASSERT_NEAR(sum, 1.0, 1e-9);
                ASSERT_LE(support, 2u);
                ++draws;
            }
        }
        // Cross-distribution support: one ID class and at most one negative class.
        for (std::size_t r = 0; r < b.cross_dist.size(); ++r) {
            std::size_t id_hits = 0;
            std::size_t neg_hits = 0;
            for (std::size_t k = 0; k < space.num_classes(); ++k) {
                if (b.cross_dist.labels(r, k) > 0.0) (space.is_id(k) ? id_hits : neg_hits) += 1;
            }
            ASSERT_LE(id_hits, 1u);
            ASSERT_LE(neg_hits, 1u);
        }
    }
}

TEST(Mixing, LargeAlphaConcentratesLambda) {
    // Feature e0 and anchor e1 are orthonormal, so the mix is proportional to
    // (lambda, 1 - lambda) and lambda = m0 / (m0 + m1).
    for (double alpha : {100.0, 400.0}) {
        Matrix anchor(1, 2);
        anchor(0, 1) = 1.0;
        const LabelSpace space({"a"}, anchor, {}, Matrix(0, 2));
        LabeledBatch batch{Matrix(1, 2), Matrix(1, 1, 1.0)};
        batch.features(0, 0) = 1.0;
        RngStream rng(21, RngPurpose::Mixing);
        double s = 0.0;
        double s2 = 0.0;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            const LabeledBatch m = mix_cross_modal(batch, {0}, space, alpha, rng);
            const double lambda = m.features(0, 0) / (m.features(0, 0) + m.features(0, 1));
            s += lambda;
            s2 += lambda * lambda;
        }
        const double mean = s / draws;
        EXPECT_NEAR(mean, 0.5, 0.01);
        EXPECT_LT(s2 / draws - mean * mean, 1.5 / (8.0 * alpha));
    }
}

TEST(CosineLr, Schedule) {
    EXPECT_EQ(cosine_lr(0, 100, 0.01), 0.01);
    EXPECT_NEAR(cosine_lr(100, 100, 0.01), 0.0, 1e-18);
    EXPECT_NEAR(cosine_lr(50, 100, 0.01), 0.005, 1e-15);
    EXPECT_THROW((void)cosine_lr(101, 100, 0.01), Error);
    EXPECT_THROW((void)cosine_lr(0, 0, 0.01), Error);
}

TEST(Objective, BreakdownIsAdditiveAndMatchesReference) {
    std::mt19937_64 gen(14);
    const LabelSpace space = oracle::random_space(gen, 3, 4, 6);
    const TrainingSet set = small_set(gen, space, 4);
    TrainConfig cfg;
    cfg.tau = 0.1;
    RngStream rng(1, RngPurpose::Mixing);
    std::vector<std::size_t> idx = {0, 3, 5, 9, 12, 17, 20, 26};
    const StepBatches b = prepare_step(set, idx, space, cfg, rng);
    for (auto s : kSchemes) {
        const PromptParams p = init_prompts(s, 2, 6, 7, PromptInit::Random, 2);
        const ObjectiveResult r = evaluate_objective(p, space, b, cfg.tau);
        EXPECT_EQ(r.losses.total, r.losses.plain + r.losses.cross_modal + r.losses.cross_dist);
        EXPECT_NEAR(r.losses.total, oracle::objective(p, space, b, cfg.tau), 1e-11);
        const ObjectiveResult only_cd = evaluate_objective(p, space, b, cfg.tau, {false, false, true});
        EXPECT_EQ(only_cd.losses.plain, 0.0);
        EXPECT_EQ(only_cd.losses.cross_dist, r.losses.cross_dist);
    }
}

TEST(Objective, GradientMatchesFiniteDifferencesPerSchemeAndTerm) {
    std::mt19937_64 gen(15);
    const LabelSpace space = oracle::random_space(gen, 3, 4, 6);
    const TrainingSet set = small_set(gen, space, 4);
    TrainConfig cfg;
    RngStream rng(2, RngPurpose::Mixing);
    const std::vector<std::size_t> idx = {1, 4, 8, 11, 13, 18, 22, 27};
    const StepBatches b = prepare_step(set, idx, space, cfg, rng);
    ASSERT_GT(b.cross_dist.size(), 0u);
    const LossTerms variants[] = {{true, true, true}, {true, false, false}, {false, true, false}, {false, false, true}};
    for (auto s : kSchemes) {
        PromptParams p = init_prompts(s, 2, 6, 7, PromptInit::Random, 3);
        for (auto& set_m : p.token_sets) {
            for (double& v : set_m.data()) v *= 10.0;
        }
        for (const LossTerms& t : variants) {
            const ObjectiveResult r = evaluate_objective(p, space, b, cfg.tau, t);
            const double err = oracle::max_relative_fd_error(
                p, r.token_grads, [&](const PromptParams& q) { return oracle::objective(q, space, b, cfg.tau, t); },
                1e-5);
            EXPECT_LT(err, 1e-4) << to_string(s) << " terms " << t.plain << t.cross_modal << t.cross_dist;
        }
    }
}

TEST(Train, ZeroEpochsReturnsInput) {
    std::mt19937_64 gen(16);
    const LabelSpace space = oracle::random_space(gen, 2, 3, 4);
    const TrainingSet set = small_set(gen, space, 3);
    const PromptParams p = init_prompts(PromptScheme::DistributionAware, 2, 4, 5, PromptInit::Random, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult r = train_prompts(p, set, space, cfg);
    for (std::size_t s = 0; s < p.token_sets.size(); ++s) {
        EXPECT_TRUE(bit_equal(r.params.token_sets[s].data(), p.token_sets[s].data()));
    }
    EXPECT_TRUE(r.trace.empty());
}

TEST(Train, Deterministic) {
    std::mt19937_64 gen(17);
    const LabelSpace space = oracle::random_space(gen, 3, 4, 6);
    const TrainingSet set = small_set(gen, space, 6);
    const PromptParams p = init_prompts(PromptScheme::ClassSpecific, 2, 6, 7, PromptInit::Random, 1);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    const TrainResult a = train_prompts(p, set, space, cfg);
    const TrainResult b = train_prompts(p, set, space, cfg);
    for (std::size_t s = 0; s < p.token_sets.size(); ++s) {
        EXPECT_TRUE(bit_equal(a.params.token_sets[s].data(), b.params.token_sets[s].data()));
    }
    cfg.seed = 1;
    const TrainResult c = train_prompts(p, set, space, cfg);
    EXPECT_FALSE(bit_equal(a.params.token_sets[0].data(), c.params.token_sets[0].data()));
}

TEST(Train, TraceRecordsAreAdditiveAndFollowSchedule) {
    std::mt19937_64 gen(18);
    const LabelSpace space = oracle::random_space(gen, 3, 4, 6);
    const TrainingSet set = small_set(gen, space, 6);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    const TrainResult r = train_prompts(init_prompts(PromptScheme::Unified, 1, 6, 7, PromptInit::Random, 0), set,
                                        space, cfg);
    const std::size_t per_epoch = (set.size() + cfg.batch_size - 1) / cfg.batch_size;
    ASSERT_EQ(r.trace.size(), per_epoch * cfg.epochs);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        const auto& t = r.trace[i];
        EXPECT_EQ(t.losses.total, t.losses.plain + t.losses.cross_modal + t.losses.cross_dist);
        EXPECT_EQ(t.lr, cosine_lr(i, r.trace.size(), cfg.lr0));
        const auto j = nlohmann::json::parse(to_jsonl(t));
        EXPECT_EQ(j.size(), 7u);
        for (const char* key : {"epoch", "batch", "L", "L_cm", "L_cd", "L_all", "lr"}) EXPECT_TRUE(j.contains(key));
        EXPECT_EQ(j["L_all"].get<double>(), t.losses.total);
    }
    EXPECT_EQ(to_jsonl(r.trace.front()).find('\n'), std::string::npos);
}

TEST(Train, LossDecreasesOnToyWorld) {
    ToyWorldConfig world_cfg;
    const ToyWorld w = generate_toy_world(world_cfg);
    NegativeSet neg = mine_negatives(w.id_anchors, w.id_labels, w.corpus, 15, 1.0);
    const LabelSpace space(w.id_labels, w.id_anchors, neg.labels, neg.anchors);
    std::vector<ClassFeatures> groups;
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        const std::size_t word = std::find(w.corpus.words.begin(), w.corpus.words.end(), space.label(k)) -
                                 w.corpus.words.begin();
        CollectedClass c = hybrid_collect(w.pools[word].real, w.pools[word].synthetic, space.anchor(k), 0.3, 16);
        groups.push_back({k, std::move(c.rows), std::move(c.provenance)});
    }
    const TrainingSet set = build_training_set(groups, space);
    TrainConfig cfg;
    const TrainResult r = train_prompts(
        init_prompts(PromptScheme::DistributionAware, 2, 16, space.num_classes(), PromptInit::Random, 0), set, space,
        cfg);
    ASSERT_EQ(r.epoch_loss.size(), 10u);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Train, DivergenceIsNumericFailure) {
    std::mt19937_64 gen(19);
    const LabelSpace space = oracle::random_space(gen, 2, 3, 4);
    const TrainingSet set = small_set(gen, space, 3);
    TrainConfig cfg;
    cfg.lr0 = 1e308;
    try {
        (void)train_prompts(init_prompts(PromptScheme::Unified, 1, 4, 5, PromptInit::Random, 0), set, space, cfg);
        FAIL() << "training should diverge";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NumericFailure);
    }
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.tau = 0.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.alpha = -1.0;
    EXPECT_THROW(cfg.validate(), Error);
}

} // namespace
} // namespace lapt
