// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lapt/labelspace.hpp"
#include "lapt/linalg.hpp"

namespace lapt {

enum class PromptScheme { Unified, ClassSpecific, DistributionAware };

std::string_view to_string(PromptScheme scheme);
PromptScheme parse_scheme(std::string_view text);

/// Learnable context tokens. Each token set is an N x D matrix; how many sets
/// exist depends on the scheme: one (unified), one per class
/// (class-specific), or exactly two (distribution-aware: set 0 for every ID
/// class, set 1 for every negative class).
struct PromptParams {
    PromptScheme scheme = PromptScheme::DistributionAware;
    std::size_t tokens = 0;
    std::size_t dim = 0;
    std::vector<Matrix> token_sets;
    std::string init_descriptor;
    std::uint64_t seed = 0;

    /// Token set used by class k in a space with `num_id` ID classes.
    std::size_t set_for_class(std::size_t k, std::size_t num_id) const;

    /// Throws ConfigError on a set count or shape inconsistent with the
    /// scheme, or on non-finite token values.
    void validate(std::size_t num_classes) const;
};

std::size_t token_set_count(PromptScheme scheme, std::size_t num_classes);

enum class PromptInit { Random, FromAnchors };

inline constexpr double kPromptInitStddev = 0.02;

/// Random init draws tokens i.i.d. N(0, 0.02²) from the prompt-init stream.
/// FromAnchors copies `seed_embedding` (length D) into every token slot.
PromptParams init_prompts(PromptScheme scheme, std::size_t tokens, std::size_t dim,
                          std::size_t num_classes, PromptInit init, std::uint64_t seed,
                          std::span<const double> seed_embedding = {});

/// Row k = normalize(anchor_k + mean of the N tokens of set(k)). With N = 0
/// the head is the identity on the anchors.
Matrix class_embeddings(const PromptParams& params, const LabelSpace& space);

/// Reverse pass of `class_embeddings`: given dLoss/dRow for every class row,
/// returns dLoss/dToken for every token set (same shapes as token_sets).
std::vector<Matrix> class_embeddings_backward(const PromptParams& params, const LabelSpace& space,
                                              const Matrix& grad_rows);

/// Learned-prompt file: {"scheme", "N", "D", "seed", "init", "token_sets",
/// "config_hash"}.
void save_prompts(const PromptParams& params, const std::string& config_hash,
                  const std::filesystem::path& path);

struct LoadedPrompts {
    PromptParams params;
    std::string config_hash;
};

/// Validates shapes against the scheme. `num_classes` is required to check
/// class-specific files; pass nullopt to skip that check.
LoadedPrompts load_prompts(const std::filesystem::path& path,
                           std::optional<std::size_t> num_classes = std::nullopt);

} // namespace lapt
