// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/collection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "lapt/error.hpp"
#include "lapt/numeric.hpp"
#include "lapt/rng.hpp"

namespace lapt {
namespace {

constexpr int kMaxPrototypeAttempts = 10000;

std::string numbered(const char* prefix, std::size_t i, int width) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

Vector random_unit(std::size_t dim, RngStream& rng) {
    for (;;) {
        Vector v(dim);
        for (double& x : v) {
            x = rng.normal();
        }
        if (norm(v) > 1e-6) {
            l2_normalize_inplace(v);
            return v;
        }
    }
}

bool separated(std::span<const double> v, const Matrix& existing, double max_cos) {
    for (std::size_t i = 0; i < existing.rows(); ++i) {
        if (dot(v, existing.row(i)) >= max_cos) {
            return false;
        }
    }
    return true;
}

/// Rejection-samples prototypes until each is below max_cos to all others.
template <class Draw>
void add_prototype(Matrix& protos, double max_cos, RngStream& rng, Draw draw) {
    for (int attempt = 0; attempt < kMaxPrototypeAttempts; ++attempt) {
        Vector v = draw(rng);
        if (separated(v, protos, max_cos)) {
            protos.append_row(v);
            return;
        }
    }
    fail(ErrorCode::ConfigError, "could not place a prototype below the cosine cap; "
                                 "increase dim or reduce class counts");
}

Vector sample_around(std::span<const double> proto, std::span<const double> gap, double sigma, RngStream& rng) {
    if (sigma == 0.0 && gap.empty()) {
        return Vector(proto.begin(), proto.end());
    }
    for (;;) {
        Vector v(proto.begin(), proto.end());
        for (std::size_t d = 0; d < v.size(); ++d) {
            v[d] += (gap.empty() ? 0.0 : gap[d]) + sigma * rng.normal();
        }
        if (norm(v) > 1e-6) {
            l2_normalize_inplace(v);
            return v;
        }
    }
}

std::vector<std::size_t> descending_by_cosine(const Matrix& pool, std::span<const double> anchor,
                                              std::vector<double>& cosines) {
    cosines.resize(pool.rows());
    for (std::size_t i = 0; i < pool.rows(); ++i) {
        cosines[i] = cosine(pool.row(i), anchor);
    }
    std::vector<std::size_t> order(pool.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cosines[a] > cosines[b]; });
    return order;
}

} // namespace

void ToyWorldConfig::validate() const {
    auto bad = [](const std::string& what) { fail(ErrorCode::ConfigError, what); };
    if (dim < 2) bad("toy world dim must be >= 2");
    if (num_id == 0) bad("toy world needs at least one ID class");
    if (per_class == 0) bad("per_class must be positive");
    if (!(sigma_id >= 0.0) || !(sigma_syn >= 0.0) || !(sigma_ret >= 0.0)) bad("spreads must be >= 0");
    if (!(eta >= 0.0 && eta <= 1.0)) bad("eta must lie in [0, 1]");
    if (!(near_ood_offset >= 0.0)) bad("near_ood_offset must be >= 0");
    if (!(modality_gap >= 0.0)) bad("modality_gap must be >= 0");
    if (!(max_prototype_cosine > -1.0 && max_prototype_cosine <= 1.0)) bad("max_prototype_cosine must lie in (-1, 1]");
    if (effective_corpus_words() < num_neg) bad("corpus_words must be >= num_neg");
}

ToyWorld generate_toy_world(const ToyWorldConfig& cfg) {
    cfg.validate();
    const RngStream root(cfg.seed, RngPurpose::ToyWorld);
    RngStream proto_rng = root.fork(1);
    RngStream pool_rng = root.fork(2);
    RngStream test_rng = root.fork(3);

    const std::size_t words = cfg.effective_corpus_words();
    const std::size_t classes = cfg.num_id + words;
    auto uniform_draw = [&](RngStream& r) { return random_unit(cfg.dim, r); };

    Matrix protos(0, cfg.dim);
    for (std::size_t i = 0; i < classes; ++i) {
        add_prototype(protos, cfg.max_prototype_cosine, proto_rng, uniform_draw);
    }
    std::vector<std::size_t> near_parent;
    for (std::size_t i = 0; i < cfg.ood_classes; ++i) {
        const std::size_t parent = proto_rng.uniform_index(cfg.num_id);
        near_parent.push_back(parent);
        add_prototype(protos, cfg.max_prototype_cosine, proto_rng, [&](RngStream& r) {
            Vector g = random_unit(cfg.dim, r);
            Vector v(protos.row(parent).begin(), protos.row(parent).end());
            for (std::size_t d = 0; d < cfg.dim; ++d) {
                v[d] += cfg.near_ood_offset * g[d];
            }
            return norm(v) > 1e-6 ? l2_normalize(v) : g;
        });
    }
    for (std::size_t i = 0; i < cfg.ood_classes; ++i) {
        add_prototype(protos, cfg.max_prototype_cosine, proto_rng, uniform_draw);
    }

    Vector gap;
    if (cfg.modality_gap > 0.0) {
        gap = random_unit(cfg.dim, proto_rng);
        for (double& x : gap) {
            x *= cfg.modality_gap;
        }
    }

    ToyWorld world;
    world.id_anchors = Matrix(0, cfg.dim);
    world.corpus.embs = Matrix(0, cfg.dim);
    for (std::size_t k = 0; k < cfg.num_id; ++k) {
        world.id_labels.push_back(numbered("class_", k, 3));
        world.id_anchors.append_row(protos.row(k));
    }
    for (std::size_t k = 0; k < classes; ++k) {
        world.corpus.words.push_back(k < cfg.num_id ? world.id_labels[k] : numbered("word_", k - cfg.num_id, 4));
        world.corpus.embs.append_row(protos.row(k));
    }

    for (std::size_t k = 0; k < classes; ++k) {
        ClassPools pools{world.corpus.words[k], Matrix(0, cfg.dim), Matrix(0, cfg.dim)};
        // Mislabeled retrieval rows: an exact count, at random positions.
        const auto noisy = static_cast<std::size_t>(std::llround(cfg.eta * static_cast<double>(cfg.per_class)));
        std::vector<std::size_t> slots(cfg.per_class);
        std::iota(slots.begin(), slots.end(), 0);
        for (std::size_t i = 0; i < noisy && i + 1 < slots.size(); ++i) {
            std::swap(slots[i], slots[i + pool_rng.uniform_index(slots.size() - i)]);
        }
        std::vector<bool> is_noisy(cfg.per_class, false);
        for (std::size_t i = 0; i < noisy && i < slots.size(); ++i) {
            is_noisy[slots[i]] = true;
        }
        for (std::size_t j = 0; j < cfg.per_class; ++j) {
            std::size_t source = k;
            if (is_noisy[j] && classes > 1) {
                source = pool_rng.uniform_index(classes - 1);
                if (source >= k) {
                    ++source;
                }
            }
            pools.real.append_row(sample_around(protos.row(source), gap, cfg.sigma_ret, pool_rng));
        }
        for (std::size_t j = 0; j < cfg.per_class; ++j) {
            pools.synthetic.append_row(sample_around(protos.row(k), gap, cfg.sigma_syn, pool_rng));
        }
        world.pools.push_back(std::move(pools));
    }

    world.test_id = Matrix(0, cfg.dim);
    for (std::size_t k = 0; k < cfg.num_id; ++k) {
        for (std::size_t j = 0; j < cfg.test_per_class; ++j) {
            world.test_id.append_row(sample_around(protos.row(k), gap, cfg.sigma_id, test_rng));
            world.test_id_class.push_back(k);
        }
    }
    if (cfg.ood_classes > 0) {
        const std::size_t near_base = classes;
        const std::size_t far_base = classes + cfg.ood_classes;
        for (auto [name, base] : {std::pair<const char*, std::size_t>{"near", near_base}, {"far", far_base}}) {
            TestSplit split{name, Matrix(0, cfg.dim)};
            for (std::size_t c = 0; c < cfg.ood_classes; ++c) {
                for (std::size_t j = 0; j < cfg.test_per_class; ++j) {
                    split.rows.append_row(sample_around(protos.row(base + c), gap, cfg.sigma_id, test_rng));
                }
            }
            world.test_ood.push_back(std::move(split));
        }
    }
    return world;
}

CollectedClass hybrid_collect(const Matrix& real_pool, const Matrix& synth_pool,
                              std::span<const double> anchor, double kappa, std::size_t n) {
    if (!(kappa > 0.0 && kappa < 1.0)) {
        fail(ErrorCode::RangeError, "kappa must lie in (0, 1)");
    }
    if (synth_pool.empty()) {
        fail(ErrorCode::EmptyInput, "synthetic pool is empty");
    }
    if (synth_pool.cols() != anchor.size() || (!real_pool.empty() && real_pool.cols() != anchor.size())) {
        fail(ErrorCode::DimensionMismatch, "pool and anchor dimensions disagree");
    }

    CollectedClass out;
    out.rows = Matrix(0, anchor.size());
    std::vector<double> cos;
    for (std::size_t i : descending_by_cosine(real_pool, anchor, cos)) {
        if (out.rows.rows() == n || !(cos[i] > kappa)) {
            break;
        }
        out.rows.append_row(real_pool.row(i));
        out.provenance.push_back(Provenance::Real);
        out.anchor_cosines.push_back(cos[i]);
    }
    for (std::size_t i : descending_by_cosine(synth_pool, anchor, cos)) {
        if (out.rows.rows() == n) {
            break;
        }
        out.rows.append_row(synth_pool.row(i));
        out.provenance.push_back(Provenance::Synthetic);
        out.anchor_cosines.push_back(cos[i]);
    }
    if (out.rows.rows() < n) {
        fail(ErrorCode::InsufficientCandidates, "only " + std::to_string(out.rows.rows()) +
                                                    " qualifying candidates for n = " + std::to_string(n));
    }
    return out;
}

TrainingSet build_training_set(const std::vector<ClassFeatures>& per_class, const LabelSpace& space) {
    const std::size_t classes = space.num_classes();
    TrainingSet set;
    set.features = Matrix(0, space.dim());
    set.soft_labels = Matrix(0, classes);
    for (const auto& group : per_class) {
        if (group.class_index >= classes) {
            fail(ErrorCode::IndexOutOfRange, "class index " + std::to_string(group.class_index) +
                                                 " outside 0.." + std::to_string(classes - 1));
        }
        if (group.rows.rows() != group.provenance.size()) {
            fail(ErrorCode::LengthMismatch, "rows and provenance disagree");
        }
        Vector onehot(classes, 0.0);
        onehot[group.class_index] = 1.0;
        for (std::size_t i = 0; i < group.rows.rows(); ++i) {
            set.features.append_row(l2_normalize(group.rows.row(i)));
            set.soft_labels.append_row(onehot);
            set.class_index.push_back(group.class_index);
            set.provenance.push_back(group.provenance[i]);
        }
    }
    return set;
}

ToyWorldBanks to_banks(const ToyWorld& world) {
    ToyWorldBanks b;
    const std::size_t num_id = world.id_labels.size();
    for (std::size_t k = 0; k < num_id; ++k) {
        b.id_anchors.append(world.id_anchors.row(k), world.id_labels[k], BankGroup::Id, Provenance::External);
    }
    for (std::size_t k = 0; k < world.corpus.words.size(); ++k) {
        b.corpus.append(world.corpus.embs.row(k), world.corpus.words[k], BankGroup::Corpus, Provenance::External);
    }
    for (std::size_t k = 0; k < world.pools.size(); ++k) {
        const auto& p = world.pools[k];
        const BankGroup group = k < num_id ? BankGroup::Id : BankGroup::Corpus;
        for (std::size_t i = 0; i < p.real.rows(); ++i) {
            b.pool_real.append(p.real.row(i), p.label, group, Provenance::Real);
        }
        for (std::size_t i = 0; i < p.synthetic.rows(); ++i) {
            b.pool_synth.append(p.synthetic.row(i), p.label, group, Provenance::Synthetic);
        }
    }
    for (std::size_t i = 0; i < world.test_id.rows(); ++i) {
        b.test_id.append(world.test_id.row(i), world.id_labels[world.test_id_class[i]], BankGroup::TestId,
                         Provenance::Real);
    }
    for (const auto& split : world.test_ood) {
        EmbeddingBank bank;
        for (std::size_t i = 0; i < split.rows.rows(); ++i) {
            bank.append(split.rows.row(i), "ood_" + split.name, BankGroup::TestOod, Provenance::Real);
        }
        b.test_ood.emplace_back(split.name, std::move(bank));
    }
    for (EmbeddingBank* bank : {&b.id_anchors, &b.corpus, &b.pool_real, &b.pool_synth, &b.test_id}) {
        quantize(*bank);
    }
    for (auto& [name, bank] : b.test_ood) {
        quantize(bank);
    }
    return b;
}

EmbeddingBank training_set_bank(const TrainingSet& set, const LabelSpace& space) {
    EmbeddingBank bank;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const std::size_t k = set.class_index[i];
        bank.append(set.features.row(i), space.label(k), space.is_id(k) ? BankGroup::Id : BankGroup::Neg,
                    set.provenance[i]);
    }
    quantize(bank);
    return bank;
}

TrainingSet training_set_from_bank(const EmbeddingBank& bank, const LabelSpace& space) {
    std::vector<ClassFeatures> groups;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const std::size_t k = space.index_of(bank.manifest[i].label);
        if (groups.empty() || groups.back().class_index != k) {
            groups.push_back({k, Matrix(0, bank.dim()), {}});
        }
        groups.back().rows.append_row(bank.rows.row(i));
        groups.back().provenance.push_back(bank.manifest[i].provenance);
    }
    return build_training_set(groups, space);
}

} // namespace lapt
