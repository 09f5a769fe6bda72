// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#include "lapt/bank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lapt/error.hpp"
#include "lapt/numeric.hpp"

namespace lapt {
namespace fs = std::filesystem;
namespace {

constexpr double kLoadNormTolerance = 1e-3;
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void check_manifest(const EmbeddingBank& bank) {
    if (bank.manifest.size() != bank.rows.rows()) {
        fail(ErrorCode::ManifestMismatch, "manifest has " + std::to_string(bank.manifest.size()) +
                                              " entries for " + std::to_string(bank.rows.rows()) +
                                              " rows");
    }
    std::vector<bool> seen(bank.manifest.size(), false);
    for (const auto& e : bank.manifest) {
        if (e.index >= seen.size() || seen[e.index]) {
            fail(ErrorCode::ManifestMismatch, "manifest indices are not a permutation of 0..N-1");
        }
        seen[e.index] = true;
    }
}

void check_norms(const Matrix& rows) {
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const double n = norm(rows.row(i));
        if (!(std::abs(n - 1.0) <= kLoadNormTolerance)) {
            fail(ErrorCode::NormViolation,
                 "row " + std::to_string(i) + " has norm " + std::to_string(n));
        }
    }
}

std::string encode_payload(const EmbeddingBank& bank) {
    std::string out(kBankMagic.begin(), kBankMagic.end());
    put_u32(out, static_cast<std::uint32_t>(bank.dim()));
    put_u32(out, static_cast<std::uint32_t>(bank.size()));
    out.reserve(out.size() + bank.rows.data().size() * 4);
    for (double v : bank.rows.data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

std::string encode_manifest(const EmbeddingBank& bank) {
    std::string out;
    for (const auto& e : bank.manifest) {
        nlohmann::ordered_json j;
        j["index"] = e.index;
        j["label"] = e.label;
        j["group"] = to_string(e.group);
        j["provenance"] = to_string(e.provenance);
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

void write_atomically(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            fail(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
        }
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) {
            fail(ErrorCode::IoError, "short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        fail(ErrorCode::MissingArtifact, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return std::move(ss).str();
}

} // namespace

std::string_view to_string(BankGroup group) {
    switch (group) {
    case BankGroup::Id: return "id";
    case BankGroup::Neg: return "neg";
    case BankGroup::Corpus: return "corpus";
    case BankGroup::TestId: return "test-id";
    case BankGroup::TestOod: return "test-ood";
    }
    return "?";
}

std::string_view to_string(Provenance provenance) {
    switch (provenance) {
    case Provenance::Real: return "real";
    case Provenance::Synthetic: return "synthetic";
    case Provenance::External: return "external";
    }
    return "?";
}

BankGroup parse_group(std::string_view text) {
    for (auto g : {BankGroup::Id, BankGroup::Neg, BankGroup::Corpus, BankGroup::TestId,
                   BankGroup::TestOod}) {
        if (to_string(g) == text) {
            return g;
        }
    }
    fail(ErrorCode::ManifestMismatch, "unknown group '" + std::string(text) + "'");
}

Provenance parse_provenance(std::string_view text) {
    for (auto p : {Provenance::Real, Provenance::Synthetic, Provenance::External}) {
        if (to_string(p) == text) {
            return p;
        }
    }
    fail(ErrorCode::ManifestMismatch, "unknown provenance '" + std::string(text) + "'");
}

void EmbeddingBank::append(std::span<const double> row, std::string label, BankGroup group,
                           Provenance provenance) {
    manifest.push_back({rows.rows(), std::move(label), group, provenance});
    rows.append_row(row);
}

fs::path manifest_path_for(const fs::path& bank_path) {
    fs::path out = bank_path;
    out.replace_extension(".manifest.jsonl");
    return out;
}

void quantize(EmbeddingBank& bank) {
    for (double& v : bank.rows.data()) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

void save_bank(const EmbeddingBank& bank, const fs::path& path) {
    check_manifest(bank);
    check_norms(bank.rows);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    write_atomically(path, encode_payload(bank));
    write_atomically(manifest_path_for(path), encode_manifest(bank));
}

EmbeddingBank load_bank(const fs::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < kBankMagic.size() ||
        !std::equal(kBankMagic.begin(), kBankMagic.end(), bytes.begin())) {
        fail(ErrorCode::BadMagic, path.string() + " is not an embedding bank");
    }
    if (bytes.size() < kHeaderBytes) {
        fail(ErrorCode::TruncatedFile, path.string() + " ends inside the header");
    }
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t dim = get_u32(raw + 8);
    const std::uint32_t count = get_u32(raw + 12);
    const std::uint64_t expected =
        kHeaderBytes + static_cast<std::uint64_t>(dim) * static_cast<std::uint64_t>(count) * 4;
    if (bytes.size() < expected) {
        fail(ErrorCode::TruncatedFile, path.string() + " holds " + std::to_string(bytes.size()) +
                                           " bytes, header implies " + std::to_string(expected));
    }
    if (bytes.size() > expected) {
        fail(ErrorCode::ManifestMismatch, path.string() + " has trailing bytes past the payload");
    }

    EmbeddingBank bank;
    bank.rows = Matrix(count, dim);
    auto data = bank.rows.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<double>(std::bit_cast<float>(get_u32(raw + kHeaderBytes + 4 * i)));
    }

    const fs::path mpath = manifest_path_for(path);
    std::istringstream lines(read_file(mpath));
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.index = j.at("index").get<std::uint64_t>();
            e.label = j.at("label").get<std::string>();
            e.group = parse_group(j.at("group").get<std::string>());
            e.provenance = parse_provenance(j.at("provenance").get<std::string>());
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            fail(ErrorCode::ManifestMismatch, mpath.string() + ": " + ex.what());
        }
    }
    bank.manifest = std::move(entries);
    check_manifest(bank);
    std::sort(bank.manifest.begin(), bank.manifest.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.index < b.index; });
    check_norms(bank.rows);
    return bank;
}

Matrix normalized_rows(const EmbeddingBank& bank) {
    Matrix out = bank.rows;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        l2_normalize_inplace(out.row(i));
    }
    return out;
}

std::uint64_t bank_fingerprint(const EmbeddingBank& bank) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    mix(encode_payload(bank));
    mix(encode_manifest(bank));
    return h;
}

} // namespace lapt
