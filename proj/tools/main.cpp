// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

// lapt: command-line driver for the prompt-tuning OOD pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lapt/error.hpp"
#include "pipeline.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Resolves a bare flag name ("kappa") to its dotted config key when the
/// leaf name is unique across sections.
std::string resolve_key(const std::string& key) {
    if (key.find('.') != std::string::npos) {
        return key;
    }
    const nlohmann::json doc = lapt::pipeline::default_document();
    if (doc.contains(key) && !doc[key].is_object()) {
        return key;
    }
    std::vector<std::string> hits;
    for (const auto& [section, body] : doc.items()) {
        if (body.is_object() && body.contains(key)) {
            hits.push_back(section + "." + key);
        }
    }
    if (hits.size() == 1) {
        return hits.front();
    }
    if (hits.empty()) {
        lapt::fail(lapt::ErrorCode::ConfigError, "unknown option --" + key);
    }
    std::string msg = "ambiguous option --" + key + "; use one of";
    for (const auto& h : hits) msg += " --" + h;
    lapt::fail(lapt::ErrorCode::ConfigError, msg);
}

Overrides parse_extras(const std::vector<std::string>& extras) {
    Overrides out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
            lapt::fail(lapt::ErrorCode::ConfigError, "unexpected argument '" + arg + "'");
        }
        std::string key = arg.substr(2);
        std::string value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else if (i + 1 < extras.size()) {
            value = extras[++i];
        } else {
            lapt::fail(lapt::ErrorCode::ConfigError, "option --" + key + " needs a value");
        }
        out.emplace_back(resolve_key(key), value);
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Label-driven prompt tuning for OOD detection"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    bool force = false;
    bool check_grad = false;
    std::string scheme;

    const std::vector<std::pair<const char*, const char*>> commands = {
        {"toygen", "Generate toy-world embedding banks"},
        {"mine-neg", "Mine negative labels and write the label space"},
        {"collect", "Select per-class training features"},
        {"train", "Learn prompt token sets"},
        {"eval", "Score test banks and write the report"},
        {"run-all", "Run every stage in order"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->allow_extras();
        sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed");
        sub->add_option("--out", out_dir, "Run directory");
        sub->add_flag("--force", force, "Accept artifacts produced by a different config");
        sub->add_option("--scheme", scheme, "Prompt scheme (eval: 'none' scores anchors only)");
        if (std::string(name) == "train" || std::string(name) == "run-all") {
            sub->add_flag("--check-grad", check_grad, "Finite-difference check of the first step");
        }
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    CLI::App* active = nullptr;
    for (CLI::App* s : subs) {
        if (s->parsed()) active = s;
    }
    const std::string command = active->get_name();

    try {
        Overrides overrides = parse_extras(active->remaining());
        lapt::pipeline::StageOptions opt;
        opt.out = out_dir;
        opt.force = force;
        opt.check_grad = check_grad;
        opt.log = &std::cout;
        if (!scheme.empty()) {
            if (scheme == "none") {
                if (command != "eval") {
                    lapt::fail(lapt::ErrorCode::ConfigError, "--scheme none is only valid for eval");
                }
                opt.baseline = true;
            } else {
                overrides.emplace_back("prompt.scheme", scheme);
            }
        }
        if (seed) {
            overrides.emplace_back("seed", std::to_string(*seed));
        }
        const lapt::pipeline::RunConfig cfg = config_path.empty()
                                                  ? lapt::pipeline::load_config(nlohmann::json::object(), overrides)
                                                  : lapt::pipeline::load_config_file(config_path, overrides);

        if (command == "toygen") {
            lapt::pipeline::run_toygen(cfg, opt);
        } else if (command == "mine-neg") {
            lapt::pipeline::run_mine_negatives(cfg, opt);
        } else if (command == "collect") {
            lapt::pipeline::run_collect(cfg, opt);
        } else if (command == "train") {
            lapt::pipeline::run_train(cfg, opt);
        } else if (command == "eval") {
            lapt::pipeline::run_eval(cfg, opt);
        } else {
            lapt::pipeline::run_all(cfg, opt);
        }
    } catch (const lapt::Error& e) {
        std::cerr << "lapt " << command << ": " << e.what() << '\n';
        return lapt::pipeline::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "lapt " << command << ": error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
