// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "lapt/bank.hpp"
#include "lapt/error.hpp"
#include "lapt/labelspace.hpp"
#include "lapt/numeric.hpp"

namespace lapt::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        fail(ErrorCode::MissingArtifact, "missing artifact " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return std::move(ss).str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            fail(ErrorCode::IoError, "cannot write " + path.string());
        }
        f << text;
    }
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Config schema

std::string joined(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void merge_into(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) {
        fail(ErrorCode::ConfigError, (prefix.empty() ? std::string("config") : prefix) + " must be a JSON object");
    }
    for (const auto& [key, value] : user.items()) {
        const std::string name = joined(prefix, key);
        if (!base.contains(key)) {
            fail(ErrorCode::ConfigError, "unknown config key '" + name + "'");
        }
        json& slot = base[key];
        if (slot.is_object()) {
            merge_into(slot, value, name);
            continue;
        }
        const bool ok = (slot.is_number() && value.is_number()) || (slot.is_null() && (value.is_number() || value.is_null())) ||
                        (slot.is_string() && value.is_string()) || (slot.is_boolean() && value.is_boolean()) ||
                        (slot.is_array() && value.is_array());
        if (!ok) {
            fail(ErrorCode::ConfigError, "config key '" + name + "' has the wrong type");
        }
        if (slot.is_number_unsigned() && !(value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() >= 0))) {
            fail(ErrorCode::ConfigError, "config key '" + name + "' must be a non-negative integer");
        }
        slot = value;
    }
}

json parse_override(const json& slot, const std::string& key, const std::string& text) {
    try {
        if (slot.is_string()) {
            return text;
        }
        if (slot.is_array()) {
            if (!text.empty() && text.front() == '[') {
                return json::parse(text);
            }
            json arr = json::array();
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!item.empty()) arr.push_back(item);
            }
            return arr;
        }
        return json::parse(text);
    } catch (const json::exception&) {
        fail(ErrorCode::ConfigError, "cannot parse value '" + text + "' for --" + key);
    }
}

std::size_t get_size(const json& j, const char* key) { return j.at(key).get<std::size_t>(); }

// ---------------------------------------------------------------------------
// Stage provenance

struct Stamp {
    std::string config_hash;
    std::map<std::string, std::string> files;
};

fs::path stamp_path(const fs::path& out, const std::string& stage) { return out / (stage + ".stamp.json"); }

void write_stamp(const fs::path& out, const std::string& stage, const std::string& config_hash,
                 const std::vector<std::string>& names) {
    json j;
    j["stage"] = stage;
    j["config_hash"] = config_hash;
    json files = json::object();
    for (const auto& name : names) {
        files[name] = hex64(fnv1a(read_bytes(out / name)));
    }
    j["files"] = std::move(files);
    write_text(stamp_path(out, stage), j.dump(2) + "\n");
}

/// Refuses artifacts of `stage` in `out` that were produced under another
/// config hash. Inputs supplied through `paths` are not stamped and skip this.
void check_upstream(const fs::path& out, const std::string& stage, const RunConfig& cfg, const StageOptions& opt) {
    const fs::path p = stamp_path(out, stage);
    if (!fs::exists(p)) {
        fail(ErrorCode::MissingArtifact, "stage '" + stage + "' has not been run in " + out.string());
    }
    const json j = json::parse(read_bytes(p));
    const std::string produced = j.value("config_hash", std::string{});
    if (produced != cfg.hash() && !opt.force) {
        fail(ErrorCode::ProvenanceMismatch, "artifacts of stage '" + stage + "' were produced by config " + produced +
                                                ", current config is " + cfg.hash() + " (use --force to accept)");
    }
}

fs::path input_path(const std::string& override_path, const fs::path& out, const char* name, const std::string& stage,
                    const RunConfig& cfg, const StageOptions& opt) {
    if (!override_path.empty()) {
        return override_path;
    }
    check_upstream(out, stage, cfg, opt);
    return out / name;
}

void log_line(const StageOptions& opt, const std::string& line) {
    if (opt.log != nullptr) {
        *opt.log << line << '\n';
    }
}

// ---------------------------------------------------------------------------
// Artifact views

LabelSpace load_label_space(const fs::path& path) {
    const EmbeddingBank bank = load_bank(path);
    const Matrix rows = normalized_rows(bank);
    std::vector<std::string> id_labels;
    std::vector<std::string> neg_labels;
    Matrix id_rows(0, bank.dim());
    Matrix neg_rows(0, bank.dim());
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto& e = bank.manifest[i];
        if (e.group == BankGroup::Id) {
            if (!neg_labels.empty()) {
                fail(ErrorCode::ManifestMismatch, "label space bank must list ID rows before negative rows");
            }
            id_labels.push_back(e.label);
            id_rows.append_row(rows.row(i));
        } else if (e.group == BankGroup::Neg) {
            neg_labels.push_back(e.label);
            neg_rows.append_row(rows.row(i));
        } else {
            fail(ErrorCode::ManifestMismatch, "label space bank rows must be in group id or neg");
        }
    }
    return LabelSpace(std::move(id_labels), std::move(id_rows), std::move(neg_labels), std::move(neg_rows));
}

EmbeddingBank label_space_bank(const LabelSpace& space) {
    EmbeddingBank bank;
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        bank.append(space.anchor(k), space.label(k), space.is_id(k) ? BankGroup::Id : BankGroup::Neg,
                    Provenance::External);
    }
    quantize(bank);
    return bank;
}

/// Rows of `bank` grouped by label, re-normalized.
std::map<std::string, Matrix> rows_by_label(const EmbeddingBank& bank) {
    const Matrix rows = normalized_rows(bank);
    std::map<std::string, Matrix> out;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        auto [it, inserted] = out.try_emplace(bank.manifest[i].label, 0, bank.dim());
        it->second.append_row(rows.row(i));
    }
    return out;
}

std::vector<std::string> toy_test_ood_names(const RunConfig& cfg) {
    if (cfg.toy.ood_classes == 0) {
        return {};
    }
    return {"test_ood_near.bank", "test_ood_far.bank"};
}

std::string split_name(const fs::path& p) {
    std::string stem = p.stem().string();
    if (stem.rfind("test_ood_", 0) == 0) {
        stem = stem.substr(9);
    }
    return stem;
}

} // namespace

// ---------------------------------------------------------------------------

json default_document() {
    return json::parse(R"({
  "seed": 0,
  "toy": {
    "D": 16, "C": 5, "M": null, "corpus_words": 0,
    "sigma_id": 0.25, "sigma_syn": 0.1, "sigma_ret": 0.4, "eta": 0.2, "n": 16,
    "test_per_class": 40, "ood_classes": 10, "near_ood_offset": 0.8,
    "modality_gap": 0.0, "max_prototype_cosine": 0.95
  },
  "mine": { "M": null, "percentile": 1.0 },
  "collect": { "kappa": 0.3, "n": 16 },
  "prompt": { "scheme": "distribution-aware", "N": 2, "init": "random" },
  "train": { "lr0": 0.01, "epochs": 10, "batch_size": 32, "tau": 0.01, "alpha": 1.0, "beta": 1.0 },
  "score": { "tau": null, "gamma": 0.5 },
  "paths": { "id_anchors": "", "corpus": "", "pool_real": "", "pool_synth": "", "test_id": [], "test_ood": [] }
})");
}

std::string RunConfig::hash() const {
    json copy = document;
    copy.erase("paths");
    return hex64(fnv1a(copy.dump()));
}

RunConfig load_config(const json& user, const std::vector<std::pair<std::string, std::string>>& overrides) {
    json doc = default_document();
    merge_into(doc, user, "");
    for (const auto& [key, text] : overrides) {
        json* node = &doc;
        std::stringstream ss(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) {
                fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
            }
            node = &(*node)[parts[i]];
        }
        if (parts.empty() || !node->contains(parts.back()) || (*node)[parts.back()].is_object()) {
            fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
        }
        json patch = json::object();
        patch[parts.back()] = parse_override((*node)[parts.back()], key, text);
        std::string prefix = key.substr(0, key.size() - parts.back().size());
        if (!prefix.empty()) prefix.pop_back();
        merge_into(*node, patch, prefix);
    }

    RunConfig cfg;
    try {
        cfg.seed = doc.at("seed").get<std::uint64_t>();
        const json& toy = doc.at("toy");
        cfg.toy.dim = get_size(toy, "D");
        cfg.toy.num_id = get_size(toy, "C");
        cfg.toy.num_neg = toy.at("M").is_null() ? 3 * cfg.toy.num_id : get_size(toy, "M");
        cfg.toy.corpus_words = get_size(toy, "corpus_words");
        cfg.toy.sigma_id = toy.at("sigma_id").get<double>();
        cfg.toy.sigma_syn = toy.at("sigma_syn").get<double>();
        cfg.toy.sigma_ret = toy.at("sigma_ret").get<double>();
        cfg.toy.eta = toy.at("eta").get<double>();
        cfg.toy.per_class = get_size(toy, "n");
        cfg.toy.test_per_class = get_size(toy, "test_per_class");
        cfg.toy.ood_classes = get_size(toy, "ood_classes");
        cfg.toy.near_ood_offset = toy.at("near_ood_offset").get<double>();
        cfg.toy.modality_gap = toy.at("modality_gap").get<double>();
        cfg.toy.max_prototype_cosine = toy.at("max_prototype_cosine").get<double>();
        cfg.toy.seed = cfg.seed;

        const json& mine = doc.at("mine");
        cfg.neg_count = mine.at("M").is_null() ? 0 : get_size(mine, "M");
        cfg.percentile = mine.at("percentile").get<double>();

        cfg.kappa = doc.at("collect").at("kappa").get<double>();
        cfg.per_class = get_size(doc.at("collect"), "n");

        const json& prompt = doc.at("prompt");
        cfg.scheme = parse_scheme(prompt.at("scheme").get<std::string>());
        cfg.tokens = get_size(prompt, "N");
        const std::string init = prompt.at("init").get<std::string>();
        if (init == "random") {
            cfg.init = PromptInit::Random;
        } else if (init == "from-anchors") {
            cfg.init = PromptInit::FromAnchors;
        } else {
            fail(ErrorCode::ConfigError, "prompt.init must be 'random' or 'from-anchors'");
        }

        const json& train = doc.at("train");
        cfg.train.lr0 = train.at("lr0").get<double>();
        cfg.train.epochs = get_size(train, "epochs");
        cfg.train.batch_size = get_size(train, "batch_size");
        cfg.train.tau = train.at("tau").get<double>();
        cfg.train.alpha = train.at("alpha").get<double>();
        cfg.train.beta = train.at("beta").get<double>();
        cfg.train.seed = cfg.seed;

        const json& score = doc.at("score");
        cfg.score.tau = score.at("tau").is_null() ? cfg.train.tau : score.at("tau").get<double>();
        cfg.score.gamma = score.at("gamma").get<double>();

        const json& paths = doc.at("paths");
        cfg.paths.id_anchors = paths.at("id_anchors").get<std::string>();
        cfg.paths.corpus = paths.at("corpus").get<std::string>();
        cfg.paths.pool_real = paths.at("pool_real").get<std::string>();
        cfg.paths.pool_synth = paths.at("pool_synth").get<std::string>();
        cfg.paths.test_id = paths.at("test_id").get<std::vector<std::string>>();
        cfg.paths.test_ood = paths.at("test_ood").get<std::vector<std::string>>();
    } catch (const json::exception& ex) {
        fail(ErrorCode::ConfigError, ex.what());
    }

    cfg.toy.validate();
    cfg.train.validate();
    if (!(cfg.percentile > 0.0 && cfg.percentile <= 1.0)) {
        fail(ErrorCode::ConfigError, "mine.percentile must lie in (0, 1]");
    }
    if (!(cfg.kappa > 0.0 && cfg.kappa < 1.0)) {
        fail(ErrorCode::ConfigError, "collect.kappa must lie in (0, 1)");
    }
    if (cfg.per_class == 0) {
        fail(ErrorCode::ConfigError, "collect.n must be positive");
    }
    if (!(cfg.score.tau > 0.0)) {
        fail(ErrorCode::ConfigError, "score.tau must be positive");
    }
    cfg.document = std::move(doc);
    return cfg;
}

RunConfig load_config_file(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream f(path);
    if (!f) {
        fail(ErrorCode::ConfigError, "cannot open config " + path.string());
    }
    json user;
    try {
        user = json::parse(f);
    } catch (const json::exception& ex) {
        fail(ErrorCode::ConfigError, path.string() + ": " + ex.what());
    }
    return load_config(user, overrides);
}

// ---------------------------------------------------------------------------
// Stages

void run_toygen(const RunConfig& cfg, const StageOptions& opt) {
    const ToyWorldBanks banks = to_banks(generate_toy_world(cfg.toy));
    save_bank(banks.id_anchors, opt.out / files::kIdAnchors);
    save_bank(banks.corpus, opt.out / files::kCorpus);
    save_bank(banks.pool_real, opt.out / files::kPoolReal);
    save_bank(banks.pool_synth, opt.out / files::kPoolSynth);
    save_bank(banks.test_id, opt.out / files::kTestId);
    std::vector<std::string> written = {files::kIdAnchors, files::kCorpus, files::kPoolReal, files::kPoolSynth,
                                        files::kTestId};
    for (const auto& [name, bank] : banks.test_ood) {
        const std::string file = "test_ood_" + name + ".bank";
        save_bank(bank, opt.out / file);
        written.push_back(file);
    }
    std::vector<std::string> stamped;
    for (const auto& w : written) {
        stamped.push_back(w);
        stamped.push_back(manifest_path_for(w).string());
    }
    write_stamp(opt.out, "toygen", cfg.hash(), stamped);
    log_line(opt, "toygen: wrote " + std::to_string(written.size()) + " banks to " + opt.out.string());
}

void run_mine_negatives(const RunConfig& cfg, const StageOptions& opt) {
    const EmbeddingBank id_bank =
        load_bank(input_path(cfg.paths.id_anchors, opt.out, files::kIdAnchors, "toygen", cfg, opt));
    const EmbeddingBank corpus_bank = load_bank(input_path(cfg.paths.corpus, opt.out, files::kCorpus, "toygen", cfg, opt));

    std::vector<std::string> id_labels;
    for (const auto& e : id_bank.manifest) id_labels.push_back(e.label);
    const Matrix id_anchors = normalized_rows(id_bank);
    CorpusBank corpus;
    for (const auto& e : corpus_bank.manifest) corpus.words.push_back(e.label);
    corpus.embs = normalized_rows(corpus_bank);

    const std::size_t count = cfg.neg_count == 0 ? 3 * id_labels.size() : cfg.neg_count;
    NegativeSet neg = mine_negatives(id_anchors, id_labels, corpus, count, cfg.percentile);
    const LabelSpace space(id_labels, id_anchors, std::move(neg.labels), std::move(neg.anchors));
    save_bank(label_space_bank(space), opt.out / files::kLabelSpace);
    write_stamp(opt.out, "mine-neg", cfg.hash(),
                {files::kLabelSpace, manifest_path_for(files::kLabelSpace).string()});
    log_line(opt, "mine-neg: C = " + std::to_string(space.num_id()) + ", M = " + std::to_string(space.num_neg()));
}

void run_collect(const RunConfig& cfg, const StageOptions& opt) {
    check_upstream(opt.out, "mine-neg", cfg, opt);
    const LabelSpace space = load_label_space(opt.out / files::kLabelSpace);
    const auto real = rows_by_label(load_bank(input_path(cfg.paths.pool_real, opt.out, files::kPoolReal, "toygen", cfg, opt)));
    const auto synth = rows_by_label(load_bank(input_path(cfg.paths.pool_synth, opt.out, files::kPoolSynth, "toygen", cfg, opt)));

    std::vector<ClassFeatures> per_class;
    std::size_t real_rows = 0;
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        const std::string& label = space.label(k);
        const auto r = real.find(label);
        const auto s = synth.find(label);
        if (s == synth.end()) {
            fail(ErrorCode::InsufficientCandidates, "no synthetic candidates for '" + label + "'");
        }
        const Matrix empty(0, space.dim());
        CollectedClass c = hybrid_collect(r == real.end() ? empty : r->second, s->second, space.anchor(k), cfg.kappa,
                                          cfg.per_class);
        real_rows += static_cast<std::size_t>(std::count(c.provenance.begin(), c.provenance.end(), Provenance::Real));
        per_class.push_back({k, std::move(c.rows), std::move(c.provenance)});
    }
    const TrainingSet set = build_training_set(per_class, space);
    save_bank(training_set_bank(set, space), opt.out / files::kTraining);
    write_stamp(opt.out, "collect", cfg.hash(), {files::kTraining, manifest_path_for(files::kTraining).string()});
    log_line(opt, "collect: " + std::to_string(set.size()) + " rows, " + std::to_string(real_rows) + " real");
}

void run_train(const RunConfig& cfg, const StageOptions& opt) {
    check_upstream(opt.out, "collect", cfg, opt);
    const LabelSpace space = load_label_space(opt.out / files::kLabelSpace);
    const TrainingSet set = training_set_from_bank(load_bank(opt.out / files::kTraining), space);

    Vector mean_anchor(space.dim(), 0.0);
    for (std::size_t k = 0; k < space.num_classes(); ++k) {
        const auto a = space.anchor(k);
        for (std::size_t d = 0; d < a.size(); ++d) mean_anchor[d] += a[d];
    }
    if (cfg.init == PromptInit::FromAnchors) {
        l2_normalize_inplace(mean_anchor);
    }
    const PromptParams initial = init_prompts(cfg.scheme, cfg.tokens, space.dim(), space.num_classes(), cfg.init,
                                              cfg.seed, cfg.init == PromptInit::FromAnchors ? std::span<const double>(mean_anchor)
                                                                                            : std::span<const double>());

    if (opt.check_grad) {
        RngStream mixing(cfg.seed, RngPurpose::Mixing);
        std::vector<std::size_t> first(std::min(set.size(), cfg.train.batch_size));
        for (std::size_t i = 0; i < first.size(); ++i) first[i] = i;
        const StepBatches batches = prepare_step(set, first, space, cfg.train, mixing);
        const double err = gradient_check(initial, space, batches, cfg.train.tau);
        log_line(opt, "check-grad: max relative error " + std::to_string(err));
        if (!(err < 1e-4)) {
            fail(ErrorCode::NumericFailure, "gradient check failed: max relative error " + std::to_string(err));
        }
    }

    const TrainResult result = train_prompts(initial, set, space, cfg.train);
    save_prompts(result.params, cfg.hash(), opt.out / files::kPrompts);
    std::string trace;
    for (const auto& r : result.trace) {
        trace += to_jsonl(r);
        trace.push_back('\n');
    }
    write_text(opt.out / files::kLossTrace, trace);
    write_stamp(opt.out, "train", cfg.hash(), {files::kPrompts, files::kLossTrace});
    if (!result.epoch_loss.empty()) {
        log_line(opt, "train: epoch-1 L_all " + std::to_string(result.epoch_loss.front()) + ", final " +
                          std::to_string(result.epoch_loss.back()));
    }
}

EvalReport run_eval(const RunConfig& cfg, const StageOptions& opt) {
    check_upstream(opt.out, "mine-neg", cfg, opt);
    const EmbeddingBank space_bank = load_bank(opt.out / files::kLabelSpace);
    const LabelSpace space = load_label_space(opt.out / files::kLabelSpace);

    Matrix class_rows;
    std::string scheme = "none";
    if (opt.baseline) {
        class_rows = space.all_anchors();
    } else {
        check_upstream(opt.out, "train", cfg, opt);
        const LoadedPrompts prompts = load_prompts(opt.out / files::kPrompts, space.num_classes());
        if (prompts.config_hash != cfg.hash() && !opt.force) {
            fail(ErrorCode::ProvenanceMismatch, "prompt file was produced by config " + prompts.config_hash);
        }
        class_rows = class_embeddings(prompts.params, space);
        scheme = std::string(to_string(prompts.params.scheme));
    }

    std::vector<fs::path> id_paths;
    std::vector<fs::path> ood_paths;
    if (cfg.paths.test_id.empty() || cfg.paths.test_ood.empty()) {
        check_upstream(opt.out, "toygen", cfg, opt);
    }
    if (cfg.paths.test_id.empty()) {
        id_paths.push_back(opt.out / files::kTestId);
    } else {
        id_paths.assign(cfg.paths.test_id.begin(), cfg.paths.test_id.end());
    }
    if (cfg.paths.test_ood.empty()) {
        for (const auto& name : toy_test_ood_names(cfg)) ood_paths.push_back(opt.out / name);
    } else {
        ood_paths.assign(cfg.paths.test_ood.begin(), cfg.paths.test_ood.end());
    }
    if (ood_paths.empty()) {
        fail(ErrorCode::ConfigError, "no OOD test banks to evaluate");
    }

    EvalReport report;
    std::map<std::string, std::string> hashes;
    hashes["labelspace"] = hex64(bank_fingerprint(space_bank));
    std::vector<Matrix> id_banks;
    std::vector<std::size_t> truth;
    bool truth_ok = true;
    for (const auto& p : id_paths) {
        const EmbeddingBank b = load_bank(p);
        hashes[p.stem().string()] = hex64(bank_fingerprint(b));
        for (const auto& e : b.manifest) {
            try {
                const std::size_t k = space.index_of(e.label);
                truth_ok = truth_ok && space.is_id(k);
                truth.push_back(k);
            } catch (const Error&) {
                truth_ok = false;
            }
        }
        id_banks.push_back(normalized_rows(b));
    }
    std::vector<LabeledRows> ood_banks;
    for (const auto& p : ood_paths) {
        const EmbeddingBank b = load_bank(p);
        hashes[p.stem().string()] = hex64(bank_fingerprint(b));
        ood_banks.push_back({split_name(p), normalized_rows(b)});
    }
    if (!truth_ok) {
        truth.clear();
    }

    report = evaluate(id_banks, truth, ood_banks, class_rows, space.num_id(), cfg.score.tau);
    report.scheme = scheme;
    report.seed = cfg.seed;
    report.config_hash = cfg.hash();
    report.bank_hashes = std::move(hashes);
    char rule[160];
    std::snprintf(rule, sizeof rule,
                  "percentile rule (nearest-rank p = %.3g over ID-anchor cosines, lowest affinity first), M = %zu",
                  cfg.percentile, space.num_neg());
    report.negative_mining = rule;

    const char* name = opt.baseline ? files::kBaselineReport : files::kReport;
    write_text(opt.out / name, to_json(report));
    write_stamp(opt.out, opt.baseline ? "eval-baseline" : "eval", cfg.hash(), {name});
    log_line(opt, format_table(report));
    return report;
}

EvalReport run_all(const RunConfig& cfg, const StageOptions& opt) {
    run_toygen(cfg, opt);
    run_mine_negatives(cfg, opt);
    run_collect(cfg, opt);
    run_train(cfg, opt);
    return run_eval(cfg, opt);
}

double gradient_check(const PromptParams& params, const LabelSpace& space, const StepBatches& batches, double tau,
                      double h) {
    const ObjectiveResult analytic = evaluate_objective(params, space, batches, tau);
    double scale = 0.0;
    for (const Matrix& g : analytic.token_grads) {
        for (double v : g.data()) scale = std::max(scale, std::abs(v));
    }
    double worst = 0.0;
    PromptParams probe = params;
    for (std::size_t s = 0; s < probe.token_sets.size(); ++s) {
        auto w = probe.token_sets[s].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + h;
            const double up = evaluate_objective(probe, space, batches, tau).losses.total;
            w[i] = saved - h;
            const double down = evaluate_objective(probe, space, batches, tau).losses.total;
            w[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double exact = analytic.token_grads[s].data()[i];
            const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-3 * scale, 1e-12});
            worst = std::max(worst, std::abs(numeric - exact) / denom);
        }
    }
    return worst;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::ProvenanceMismatch:
    case ErrorCode::RangeError:
    case ErrorCode::NonPositiveParameter:
    case ErrorCode::NonPositiveTemperature:
        return 2;
    case ErrorCode::MissingArtifact:
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedFile:
    case ErrorCode::ManifestMismatch:
    case ErrorCode::NormViolation:
    case ErrorCode::IoError:
        return 3;
    default:
        return 4;
    }
}

} // namespace lapt::pipeline
