// Copyright 2026 The lapt-ood Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lapt/linalg.hpp"

namespace lapt {

enum class BankGroup { Id, Neg, Corpus, TestId, TestOod };
enum class Provenance { Real, Synthetic, External };

std::string_view to_string(BankGroup group);
std::string_view to_string(Provenance provenance);
BankGroup parse_group(std::string_view text);
Provenance parse_provenance(std::string_view text);

struct ManifestEntry {
    std::uint64_t index = 0;
    std::string label;
    BankGroup group = BankGroup::Id;
    Provenance provenance = Provenance::Real;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Unit-norm embedding rows plus their manifest. Rows are held in 64-bit but
/// always carry values that are exactly representable in 32-bit once the bank
/// has been through `quantize`, `save_bank` or `load_bank`.
struct EmbeddingBank {
    Matrix rows;
    std::vector<ManifestEntry> manifest;

    std::size_t dim() const noexcept { return rows.cols(); }
    std::size_t size() const noexcept { return rows.rows(); }

    void append(std::span<const double> row, std::string label, BankGroup group,
                Provenance provenance);
};

/// On-disk layout:
///   "LAPTEMB1" | u32 D | u32 N | N*D float32, all little-endian, row-major.
/// The manifest lives beside it in `<stem>.manifest.jsonl`, one JSON object
/// per row: {"index", "label", "group", "provenance"}.
inline constexpr std::array<char, 8> kBankMagic = {'L', 'A', 'P', 'T', 'E', 'M', 'B', '1'};

/// `foo.bank` -> `foo.manifest.jsonl`.
std::filesystem::path manifest_path_for(const std::filesystem::path& bank_path);

/// Rounds every row to float32 and back, the precision banks are stored at.
void quantize(EmbeddingBank& bank);

/// Writes both files atomically (temp + rename). Throws NormViolation for
/// rows outside 1 ± 1e-3 and ManifestMismatch for inconsistent manifests.
void save_bank(const EmbeddingBank& bank, const std::filesystem::path& path);

/// Reads and validates a bank. Rows are returned exactly as stored
/// (float32 widened to double). Errors: MissingArtifact, BadMagic,
/// TruncatedFile, ManifestMismatch, NormViolation.
EmbeddingBank load_bank(const std::filesystem::path& path);

/// Rows of a loaded bank re-normalized in 64-bit to within 1e-6.
Matrix normalized_rows(const EmbeddingBank& bank);

/// FNV-1a 64 over the exact bytes `save_bank` would write (payload, then
/// manifest).
std::uint64_t bank_fingerprint(const EmbeddingBank& bank);

} // namespace lapt
