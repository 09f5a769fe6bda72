// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/prompts.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lapt/error.hpp"
#include "lapt/numeric.hpp"
#include "lapt/rng.hpp"

namespace lapt {
namespace {

double token_scale(std::size_t tokens) { return 1.0 / static_cast<double>(tokens == 0 ? 1 : tokens); }

/// Pre-normalization row u_k = anchor_k + mean of the tokens of set(k).
Vector composed_row(const PromptParams& params, const LabelSpace& space, std::size_t k) {
    const auto anchor = space.anchor(k);
    Vector u(anchor.begin(), anchor.end());
    if (params.tokens == 0) {
        return u;
    }
    const Matrix& set = params.token_sets[params.set_for_class(k, space.num_id())];
    const double scale = token_scale(params.tokens);
    for (std::size_t n = 0; n < params.tokens; ++n) {
        const auto tok = set.row(n);
        for (std::size_t d = 0; d < u.size(); ++d) {
            u[d] += scale * tok[d];
        }
    }
    return u;
}

void check_compatible(const PromptParams& params, const LabelSpace& space) {
    if (params.dim != space.dim()) {
        fail(ErrorCode::DimensionMismatch, "prompt dim " + std::to_string(params.dim) +
                                               " vs label space dim " + std::to_string(space.dim()));
    }
    params.validate(space.num_classes());
}

} // namespace

std::string_view to_string(PromptScheme scheme) {
    switch (scheme) {
    case PromptScheme::Unified: return "unified";
    case PromptScheme::ClassSpecific: return "class-specific";
    case PromptScheme::DistributionAware: return "distribution-aware";
    }
    return "?";
}

PromptScheme parse_scheme(std::string_view text) {
    for (auto s : {PromptScheme::Unified, PromptScheme::ClassSpecific, PromptScheme::DistributionAware}) {
        if (to_string(s) == text) {
            return s;
        }
    }
    fail(ErrorCode::ConfigError, "unknown prompt scheme '" + std::string(text) + "'");
}

std::size_t token_set_count(PromptScheme scheme, std::size_t num_classes) {
    switch (scheme) {
    case PromptScheme::Unified: return 1;
    case PromptScheme::ClassSpecific: return num_classes;
    case PromptScheme::DistributionAware: return 2;
    }
    return 0;
}

std::size_t PromptParams::set_for_class(std::size_t k, std::size_t num_id) const {
    switch (scheme) {
    case PromptScheme::Unified: return 0;
    case PromptScheme::ClassSpecific: return k;
    case PromptScheme::DistributionAware: return k < num_id ? 0 : 1;
    }
    return 0;
}

void PromptParams::validate(std::size_t num_classes) const {
    if (token_sets.size() != token_set_count(scheme, num_classes)) {
        fail(ErrorCode::ConfigError, std::string(to_string(scheme)) + " prompts need " +
                                         std::to_string(token_set_count(scheme, num_classes)) +
                                         " token sets, found " + std::to_string(token_sets.size()));
    }
    for (const Matrix& set : token_sets) {
        if (set.rows() != tokens || (tokens > 0 && set.cols() != dim)) {
            fail(ErrorCode::ConfigError, "token set shape does not match N x D");
        }
        for (double v : set.data()) {
            if (!std::isfinite(v)) {
                fail(ErrorCode::ConfigError, "non-finite token value");
            }
        }
    }
}

PromptParams init_prompts(PromptScheme scheme, std::size_t tokens, std::size_t dim,
                          std::size_t num_classes, PromptInit init, std::uint64_t seed,
                          std::span<const double> seed_embedding) {
    if (dim == 0) {
        fail(ErrorCode::ConfigError, "prompt dim must be positive");
    }
    PromptParams p;
    p.scheme = scheme;
    p.tokens = tokens;
    p.dim = dim;
    p.seed = seed;
    const std::size_t sets = token_set_count(scheme, num_classes);
    if (init == PromptInit::FromAnchors) {
        if (seed_embedding.size() != dim) {
            fail(ErrorCode::ConfigError, "from-anchors init needs a D-dimensional embedding");
        }
        p.init_descriptor = "from-anchors";
        for (std::size_t s = 0; s < sets; ++s) {
            Matrix m(0, dim);
            for (std::size_t n = 0; n < tokens; ++n) {
                m.append_row(seed_embedding);
            }
            p.token_sets.push_back(std::move(m));
        }
        return p;
    }
    p.init_descriptor = "random";
    RngStream rng(seed, RngPurpose::PromptInit);
    for (std::size_t s = 0; s < sets; ++s) {
        Matrix m(tokens, dim);
        for (double& v : m.data()) {
            v = kPromptInitStddev * rng.normal();
        }
        p.token_sets.push_back(std::move(m));
    }
    return p;
}

Matrix class_embeddings(const PromptParams& params, const LabelSpace& space) {
    check_compatible(params, space);
    Matrix out(space.num_classes(), space.dim());
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        Vector u = composed_row(params, space, k);
        l2_normalize_inplace(u);
        std::copy(u.begin(), u.end(), out.row(k).begin());
    }
    return out;
}

std::vector<Matrix> class_embeddings_backward(const PromptParams& params, const LabelSpace& space,
                                              const Matrix& grad_rows) {
    check_compatible(params, space);
    if (grad_rows.rows() != space.num_classes() || grad_rows.cols() != space.dim()) {
        fail(ErrorCode::DimensionMismatch, "grad_rows must be (C+M) x D");
    }
    std::vector<Matrix> grads;
    for (const Matrix& set : params.token_sets) {
        grads.emplace_back(set.rows(), params.dim);
    }
    if (params.tokens == 0) {
        return grads;
    }
    const double scale = token_scale(params.tokens);
    const std::size_t dim = space.dim();
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        const Vector u = composed_row(params, space, k);
        const double len = norm(u);
        const auto g = grad_rows.row(k);
        // d normalize(u) / du = (I - c c^T) / |u| with c = u / |u|.
        double radial = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            radial += u[d] * g[d];
        }
        radial /= len * len;
        Matrix& target = grads[params.set_for_class(k, space.num_id())];
        for (std::size_t d = 0; d < dim; ++d) {
            const double gu = (g[d] - radial * u[d]) / len;
            for (std::size_t n = 0; n < params.tokens; ++n) {
                target(n, d) += scale * gu;
            }
        }
    }
    return grads;
}

void save_prompts(const PromptParams& params, const std::string& config_hash,
                  const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["scheme"] = to_string(params.scheme);
    j["N"] = params.tokens;
    j["D"] = params.dim;
    j["seed"] = params.seed;
    j["init"] = params.init_descriptor;
    auto sets = nlohmann::ordered_json::array();
    for (const Matrix& set : params.token_sets) {
        auto rows = nlohmann::ordered_json::array();
        for (std::size_t n = 0; n < set.rows(); ++n) {
            const auto r = set.row(n);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        sets.push_back(std::move(rows));
    }
    j["token_sets"] = std::move(sets);
    j["config_hash"] = config_hash;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        fail(ErrorCode::IoError, "cannot write " + path.string());
    }
    f << j.dump(1) << '\n';
}

LoadedPrompts load_prompts(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
    std::ifstream f(path);
    if (!f) {
        fail(ErrorCode::MissingArtifact, "cannot open " + path.string());
    }
    LoadedPrompts out;
    try {
        const auto j = nlohmann::json::parse(f);
        PromptParams& p = out.params;
        p.scheme = parse_scheme(j.at("scheme").get<std::string>());
        p.tokens = j.at("N").get<std::size_t>();
        p.dim = j.at("D").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        p.init_descriptor = j.value("init", std::string{});
        for (const auto& set : j.at("token_sets")) {
            Matrix m(0, p.dim);
            for (const auto& row : set) {
                m.append_row(row.get<std::vector<double>>());
            }
            p.token_sets.push_back(std::move(m));
        }
        out.config_hash = j.at("config_hash").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::ConfigError, path.string() + ": " + ex.what());
    } catch (const Error& ex) {
        fail(ErrorCode::ConfigError, path.string() + ": " + ex.what());
    }
    const std::size_t classes = num_classes.value_or(
        out.params.scheme == PromptScheme::ClassSpecific ? out.params.token_sets.size() : 0);
    out.params.validate(classes);
    return out;
}

} // namespace lapt
