// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "lapt/error.hpp"
#include "lapt/numeric.hpp"
#include "lapt/prompts.hpp"
#include "support/oracles.hpp"

namespace lapt {
namespace {

constexpr PromptScheme kSchemes[] = {PromptScheme::Unified, PromptScheme::ClassSpecific,
                                     PromptScheme::DistributionAware};

PromptParams random_params(PromptScheme scheme, std::size_t tokens, const LabelSpace& space, std::uint64_t seed,
                           double spread) {
    PromptParams p = init_prompts(scheme, tokens, space.dim(), space.num_classes(), PromptInit::Random, seed);
    for (auto& set : p.token_sets) {
        for (double& v : set.data()) v *= spread / kPromptInitStddev;
    }
    return p;
}

TEST(Prompts, SchemeNamesAndSetCounts) {
    for (auto s : kSchemes) EXPECT_EQ(parse_scheme(to_string(s)), s);
    EXPECT_EQ(to_string(PromptScheme::DistributionAware), "distribution-aware");
    EXPECT_THROW((void)parse_scheme("none"), Error);
    EXPECT_EQ(token_set_count(PromptScheme::Unified, 7), 1u);
    EXPECT_EQ(token_set_count(PromptScheme::ClassSpecific, 7), 7u);
    EXPECT_EQ(token_set_count(PromptScheme::DistributionAware, 7), 2u);
}

TEST(Prompts, ZeroTokensGiveAnchors) {
    std::mt19937_64 gen(1);
    const LabelSpace space = oracle::random_space(gen, 3, 4, 6);
    for (auto s : kSchemes) {
        const PromptParams p = init_prompts(s, 0, 6, 7, PromptInit::Random, 9);
        for (const auto& set : p.token_sets) EXPECT_EQ(set.rows(), 0u);
        const Matrix rows = class_embeddings(p, space);
        for (std::size_t i = 0; i < rows.data().size(); ++i) {
            EXPECT_NEAR(rows.data()[i], space.all_anchors().data()[i], 1e-15);
        }
    }
}

TEST(Prompts, ZeroUnifiedTokensGiveAnchors) {
    std::mt19937_64 gen(2);
    const LabelSpace space = oracle::random_space(gen, 2, 3, 5);
    PromptParams p = init_prompts(PromptScheme::Unified, 3, 5, 5, PromptInit::Random, 1);
    for (double& v : p.token_sets[0].data()) v = 0.0;
    const Matrix rows = class_embeddings(p, space);
    for (std::size_t i = 0; i < rows.data().size(); ++i) {
        EXPECT_NEAR(rows.data()[i], space.all_anchors().data()[i], 1e-15);
    }
}

TEST(Prompts, RandomInitIsSeededAndScaled) {
    const PromptParams a = init_prompts(PromptScheme::ClassSpecific, 2, 16, 313, PromptInit::Random, 4);
    const PromptParams b = init_prompts(PromptScheme::ClassSpecific, 2, 16, 313, PromptInit::Random, 4);
    EXPECT_EQ(a.token_sets, b.token_sets);
    double s = 0.0;
    double s2 = 0.0;
    std::size_t n = 0;
    for (const auto& set : a.token_sets) {
        for (double v : set.data()) {
            s += v;
            s2 += v * v;
            ++n;
        }
    }
    ASSERT_GE(n, 10000u);
    const double mean = s / static_cast<double>(n);
    const double sd = std::sqrt(s2 / static_cast<double>(n) - mean * mean);
    EXPECT_NEAR(sd, 0.02, 0.002);
}

TEST(Prompts, FromAnchorsCopiesSeedEmbedding) {
    const Vector seed = l2_normalize(Vector{1.0, 2.0, 2.0});
    const PromptParams p = init_prompts(PromptScheme::DistributionAware, 2, 3, 4, PromptInit::FromAnchors, 0, seed);
    ASSERT_EQ(p.token_sets.size(), 2u);
    for (const auto& set : p.token_sets) {
        for (std::size_t t = 0; t < 2; ++t) {
            for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(set(t, d), seed[d]);
        }
    }
    EXPECT_THROW((void)init_prompts(PromptScheme::Unified, 1, 3, 4, PromptInit::FromAnchors, 0, {}), Error);
}

TEST(Prompts, DistributionAwareSeparatesEqualAnchors) {
    const Vector a = l2_normalize(Vector{1.0, 0.5, 0.0, 0.0});
    Matrix ida(0, 4);
    ida.append_row(a);
    Matrix nega = ida;
    const LabelSpace space({"in"}, ida, {"out"}, nega);
    PromptParams p = init_prompts(PromptScheme::DistributionAware, 1, 4, 2, PromptInit::Random, 0);
    for (double& v : p.token_sets[0].data()) v = 0.1;
    for (double& v : p.token_sets[1].data()) v = -0.1;
    const Matrix rows = class_embeddings(p, space);
    EXPECT_NE(Vector(rows.row(0).begin(), rows.row(0).end()), Vector(rows.row(1).begin(), rows.row(1).end()));
    EXPECT_LT(cosine(rows.row(0), rows.row(1)), 1.0 - 1e-6);
}

TEST(Prompts, ForwardMatchesReferenceAndIsUnit) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 60; ++trial) {
        const LabelSpace space = oracle::random_space(gen, 1 + trial % 4, trial % 5, 2 + trial % 7);
        for (auto s : kSchemes) {
            const PromptParams p = random_params(s, trial % 4, space, trial, 0.3);
            const Matrix rows = class_embeddings(p, space);
            const Matrix ref = oracle::composed_rows(p, space);
            for (std::size_t i = 0; i < rows.data().size(); ++i) ASSERT_NEAR(rows.data()[i], ref.data()[i], 1e-14);
            for (std::size_t k = 0; k < rows.rows(); ++k) ASSERT_NEAR(norm(rows.row(k)), 1.0, 1e-9);
        }
    }
}

TEST(Prompts, SchemeResolutionIsolatesSets) {
    std::mt19937_64 gen(4);
    const LabelSpace space = oracle::random_space(gen, 3, 4, 5);
    const PromptParams p = random_params(PromptScheme::DistributionAware, 2, space, 1, 0.2);
    const Matrix base = class_embeddings(p, space);
    for (std::size_t changed : {0u, 1u}) {
        PromptParams q = p;
        for (double& v : q.token_sets[changed].data()) v += 0.05;
        const Matrix rows = class_embeddings(q, space);
        for (std::size_t k = 0; k < space.num_classes(); ++k) {
            const bool served = (changed == 0) == space.is_id(k);
            const bool same = std::equal(rows.row(k).begin(), rows.row(k).end(), base.row(k).begin());
            EXPECT_EQ(same, !served) << "class " << k << " set " << changed;
        }
    }
}

TEST(Prompts, ForwardIsScaleInvariantInPreNormalizationSum) {
    // Scaling anchor and tokens together by c scales the pre-normalization sum by c.
    std::mt19937_64 gen(5);
    const LabelSpace space = oracle::random_space(gen, 2, 2, 4);
    const PromptParams p = random_params(PromptScheme::ClassSpecific, 2, space, 2, 0.3);
    const Matrix base = class_embeddings(p, space);
    for (double c : {0.1, 3.0, 250.0}) {
        for (std::size_t k = 0; k < space.num_classes(); ++k) {
            Vector u(space.anchor(k).begin(), space.anchor(k).end());
            for (std::size_t t = 0; t < 2; ++t) {
                for (std::size_t d = 0; d < 4; ++d) u[d] += p.token_sets[k](t, d) / 2.0;
            }
            for (double& x : u) x *= c;
            const Vector row = l2_normalize(u);
            for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(row[d], base(k, d), 1e-9);
        }
    }
}

TEST(PromptsBackward, ZeroUpstreamGivesZero) {
    std::mt19937_64 gen(6);
    const LabelSpace space = oracle::random_space(gen, 3, 2, 5);
    for (auto s : kSchemes) {
        const PromptParams p = random_params(s, 2, space, 3, 0.2);
        for (const auto& g : class_embeddings_backward(p, space, Matrix(5, 5))) {
            for (double v : g.data()) EXPECT_EQ(v, 0.0);
        }
    }
}

TEST(PromptsBackward, RadialUpstreamIsAnnihilated) {
    std::mt19937_64 gen(7);
    const LabelSpace space = oracle::random_space(gen, 2, 3, 6);
    for (auto s : kSchemes) {
        const PromptParams p = random_params(s, 3, space, 4, 0.2);
        Matrix g = class_embeddings(p, space);
        for (double& v : g.data()) v *= 2.5;
        for (const auto& t : class_embeddings_backward(p, space, g)) {
            for (double v : t.data()) EXPECT_NEAR(v, 0.0, 1e-14);
        }
    }
}

TEST(PromptsBackward, MatchesFiniteDifferences) {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 10; ++trial) {
        const LabelSpace space = oracle::random_space(gen, 3, trial % 3, 5);
        const Matrix upstream = oracle::random_units(gen, space.num_classes(), 5);
        for (auto s : kSchemes) {
            const PromptParams p = random_params(s, 1 + trial % 3, space, trial, 0.3);
            const auto analytic = class_embeddings_backward(p, space, upstream);
            auto loss = [&](const PromptParams& q) {
                const Matrix rows = oracle::composed_rows(q, space);
                double total = 0.0;
                for (std::size_t i = 0; i < rows.data().size(); ++i) total += rows.data()[i] * upstream.data()[i];
                return total;
            };
            EXPECT_LT(oracle::max_relative_fd_error(p, analytic, loss, 1e-5), 1e-5)
                << to_string(s) << " trial " << trial;
        }
    }
}

TEST(PromptsFile, RoundTripIsExact) {
    std::mt19937_64 gen(9);
    const LabelSpace space = oracle::random_space(gen, 2, 3, 4);
    const auto path = std::filesystem::temp_directory_path() / "lapt_prompts_roundtrip.json";
    for (auto s : kSchemes) {
        const PromptParams p = random_params(s, 2, space, 5, 0.7);
        save_prompts(p, "00ff00ff00ff00ff", path);
        const LoadedPrompts back = load_prompts(path, space.num_classes());
        EXPECT_EQ(back.config_hash, "00ff00ff00ff00ff");
        EXPECT_EQ(back.params.scheme, s);
        EXPECT_EQ(back.params.tokens, 2u);
        EXPECT_EQ(back.params.token_sets, p.token_sets);
    }
    std::filesystem::remove(path);
}

TEST(PromptsFile, MissingAndMalformed) {
    const auto path = std::filesystem::temp_directory_path() / "lapt_prompts_bad.json";
    std::filesystem::remove(path);
    try {
        (void)load_prompts(path);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingArtifact);
    }
    {
        std::ofstream f(path);
        f << R"({"scheme":"unified","N":1,"D":2,"seed":0,"token_sets":[[[1,2,3]]],"config_hash":"x"})";
    }
    try {
        (void)load_prompts(path);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    }
    std::filesystem::remove(path);
}

} // namespace
} // namespace lapt
