// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "topmil/bag.hpp"

namespace topmil {

// Embedding archive layout (all integers little-endian):
//
//   char[8]  magic "TOPEMB1\0"
//   u32      m
//   u32      bag_count
//   per bag:
//     u32    n_i
//     u8     bag_label
//     u8     has_instance_labels
//     u8     instance_labels[n_i]      (only if has_instance_labels)
//     f32    features[n_i * m]         (row-major)
//
// Features are stored as float32 and widened to double on load.
inline constexpr char kArchiveMagic[8] = {'T', 'O', 'P', 'E', 'M', 'B', '1', '\0'};
inline constexpr std::size_t kArchiveHeaderBytes = 16;

struct ManifestEntry {
  std::string bag_id;
  std::size_t label = 0;
  std::size_t n_instances = 0;
  std::uint64_t byte_offset = 0;  // offset of the bag's n_i field
  std::string source;
};

struct ArchiveManifest {
  std::size_t feature_dim = 0;
  std::vector<ManifestEntry> bags;
};

struct EmbeddingArchive {
  std::size_t feature_dim = 0;
  std::vector<Bag> bags;
};

/// Serialized archive bytes. Labels must fit in u8 and every bag must have
/// `feature_dim` columns.
std::vector<std::uint8_t> encode_archive(const EmbeddingArchive& archive);
EmbeddingArchive decode_archive(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");

/// Manifest entries describing where each bag of `archive` lands in
/// encode_archive's output.
ArchiveManifest describe_archive(const EmbeddingArchive& archive, std::string_view source);

std::string manifest_to_json(const ArchiveManifest& manifest);
ArchiveManifest manifest_from_json(std::string_view text, std::string_view source = "<memory>");

/// Sidecar path: "<archive>.manifest.json".
std::filesystem::path manifest_path(const std::filesystem::path& archive_path);

/// Writes the archive and its manifest, each atomically. `source` is recorded
/// per bag in the manifest (defaults to the archive file name).
void write_archive(const std::filesystem::path& path, const EmbeddingArchive& archive,
                   std::string_view source = {});
EmbeddingArchive read_archive(const std::filesystem::path& path);

/// Full validation: the archive decodes, the manifest parses, and every
/// manifest entry matches the binary layout (labels, n_i, byte offsets).
/// Throws FormatError on the first mismatch.
void validate_archive(const std::filesystem::path& path);

/// Writes `bytes` to `path` via a temporary file in the same directory and
/// a rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace topmil
