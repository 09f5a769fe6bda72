// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lapt/collection.hpp"
#include "lapt/error.hpp"
#include "lapt/metrics.hpp"
#include "lapt/prompts.hpp"
#include "lapt/scoring.hpp"
#include "lapt/training.hpp"

namespace lapt::pipeline {

/// Everything one pipeline run depends on. The JSON document is canonical;
/// command-line `--section.key value` flags override it.
struct RunConfig {
    std::uint64_t seed = 0;
    ToyWorldConfig toy;
    std::size_t neg_count = 15;
    double percentile = 1.0;
    double kappa = 0.3;
    std::size_t per_class = 16;
    PromptScheme scheme = PromptScheme::DistributionAware;
    std::size_t tokens = 2;
    PromptInit init = PromptInit::Random;
    TrainConfig train;
    ScoreConfig score;

    /// Input overrides; empty means "the file the producing stage writes
    /// into the output directory".
    struct Paths {
        std::string id_anchors;
        std::string corpus;
        std::string pool_real;
        std::string pool_synth;
        std::vector<std::string> test_id;
        std::vector<std::string> test_ood;
    } paths;

    /// Canonical JSON (all keys, defaults filled in).
    nlohmann::json document;

    /// FNV-1a 64 of the canonical document without `paths`, as 16 hex digits.
    std::string hash() const;
};

/// The default document; every accepted key appears in it.
nlohmann::json default_document();

/// Merges `user` over the defaults, applies `overrides` (dotted key, raw
/// value text), validates and returns the typed config. Unknown keys and
/// ill-typed values raise ConfigError.
RunConfig load_config(const nlohmann::json& user,
                      const std::vector<std::pair<std::string, std::string>>& overrides = {});

RunConfig load_config_file(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});

struct StageOptions {
    std::filesystem::path out = "out";
    /// Accept upstream artifacts stamped with a different config hash.
    bool force = false;
    /// eval: score with the anchors alone (N = 0), ignoring trained prompts.
    bool baseline = false;
    /// train: run a finite-difference check of the first step's gradient.
    bool check_grad = false;
    /// Table and progress lines go here when set.
    std::ostream* log = nullptr;
};

void run_toygen(const RunConfig& cfg, const StageOptions& opt);
void run_mine_negatives(const RunConfig& cfg, const StageOptions& opt);
void run_collect(const RunConfig& cfg, const StageOptions& opt);
void run_train(const RunConfig& cfg, const StageOptions& opt);
EvalReport run_eval(const RunConfig& cfg, const StageOptions& opt);
EvalReport run_all(const RunConfig& cfg, const StageOptions& opt);

/// Max relative error between the analytic token gradient of the objective
/// on `batches` and central differences with step h.
double gradient_check(const PromptParams& params, const LabelSpace& space, const StepBatches& batches,
                      double tau, double h = 1e-5);

/// Process exit status for a library error: 2 config, 3 missing or corrupt
/// artifact, 4 numeric failure.
int exit_code_for(ErrorCode code);

/// Output file names inside the run directory.
namespace files {
inline constexpr const char* kIdAnchors = "id_anchors.bank";
inline constexpr const char* kCorpus = "corpus.bank";
inline constexpr const char* kPoolReal = "pool_real.bank";
inline constexpr const char* kPoolSynth = "pool_synth.bank";
inline constexpr const char* kTestId = "test_id.bank";
inline constexpr const char* kLabelSpace = "labelspace.bank";
inline constexpr const char* kTraining = "training.bank";
inline constexpr const char* kPrompts = "prompts.json";
inline constexpr const char* kLossTrace = "loss_trace.jsonl";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kBaselineReport = "report_baseline.json";
} // namespace files

} // namespace lapt::pipeline
