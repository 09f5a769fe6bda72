// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <vector>

#include "lapt/collection.hpp"
#include "lapt/labelspace.hpp"
#include "lapt/metrics.hpp"
#include "lapt/numeric.hpp"
#include "lapt/prompts.hpp"
#include "lapt/rng.hpp"
#include "lapt/scoring.hpp"
#include "lapt/training.hpp"

namespace {

using namespace lapt;

Matrix random_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
    RngStream rng(seed, RngPurpose::ToyWorld);
    Matrix m(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        Vector v(dim);
        for (double& x : v) x = rng.normal();
        l2_normalize_inplace(v);
        std::copy(v.begin(), v.end(), m.row(i).begin());
    }
    return m;
}

LabelSpace make_space(std::size_t c, std::size_t m, std::size_t dim) {
    std::vector<std::string> id;
    std::vector<std::string> neg;
    for (std::size_t i = 0; i < c; ++i) id.push_back("id" + std::to_string(i));
    for (std::size_t i = 0; i < m; ++i) neg.push_back("neg" + std::to_string(i));
    return LabelSpace(id, random_rows(c, dim, 1), neg, random_rows(m, dim, 2));
}

TrainingSet make_training_set(const LabelSpace& space, std::size_t per_class) {
    std::vector<ClassFeatures> groups;
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        groups.push_back(
            {k, random_rows(per_class, space.dim(), 10 + k), std::vector<Provenance>(per_class, Provenance::Synthetic)});
    }
    return build_training_set(groups, space);
}

void BM_NegLabelScores(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t threads = static_cast<std::size_t>(state.range(1));
    const Matrix features = random_rows(n, 64, 2);
    const Matrix id = random_rows(100, 64, 3);
    const Matrix neg = random_rows(1000, 64, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(neglabel_scores(features, id, neg, 0.01, threads));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_NegLabelScores)->Args({1000, 1})->Args({1000, 4})->Args({10000, 4})->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_Auroc(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    RngStream rng(5, RngPurpose::ToyWorld);
    std::vector<double> id(n);
    std::vector<double> ood(n);
    for (double& x : id) x = rng.normal() + 1.0;
    for (double& x : ood) x = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(auroc(id, ood));
        benchmark::DoNotOptimize(fpr_at_tpr(id, ood));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Auroc)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);

void BM_ClassEmbeddings(benchmark::State& state) {
    const LabelSpace space = make_space(5, 15, 16);
    const PromptParams p = init_prompts(PromptScheme::DistributionAware, 16, 16, 20, PromptInit::Random, 6);
    for (auto _ : state) {
        benchmark::DoNotOptimize(class_embeddings(p, space));
    }
}
BENCHMARK(BM_ClassEmbeddings);

void BM_ObjectiveForwardBackward(benchmark::State& state) {
    const auto scheme = static_cast<PromptScheme>(state.range(0));
    const LabelSpace space = make_space(5, 15, 16);
    const TrainingSet set = make_training_set(space, 16);
    std::vector<std::size_t> batch(32);
    std::iota(batch.begin(), batch.end(), 0);
    TrainConfig cfg;
    RngStream rng(7, RngPurpose::Mixing);
    const StepBatches b = prepare_step(set, batch, space, cfg, rng);
    const PromptParams p = init_prompts(scheme, 16, 16, space.num_classes(), PromptInit::Random, 8);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_objective(p, space, b, cfg.tau));
    }
    state.SetLabel(std::string(to_string(scheme)));
}
BENCHMARK(BM_ObjectiveForwardBackward)
    ->Arg(static_cast<int>(PromptScheme::Unified))
    ->Arg(static_cast<int>(PromptScheme::ClassSpecific))
    ->Arg(static_cast<int>(PromptScheme::DistributionAware));

void BM_TrainToyScale(benchmark::State& state) {
    // Toy-world scale: C=5, M=15, D=16, 16 rows per class.
    const LabelSpace space = make_space(5, 15, 16);
    const TrainingSet set = make_training_set(space, 16);
    TrainConfig cfg;
    const PromptParams init =
        init_prompts(PromptScheme::DistributionAware, 16, space.dim(), space.num_classes(), PromptInit::Random, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_prompts(init, set, space, cfg));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(set.size() * cfg.epochs));
}
BENCHMARK(BM_TrainToyScale)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
