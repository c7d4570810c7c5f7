// Copyright 2026 The topmil Authors
// SPDX-License-Identifier: Apache-2.0

#include "topmil/archive.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "topmil/errors.hpp"

namespace topmil {
namespace {

static_assert(std::numeric_limits<float>::is_iec559, "archive format needs IEEE-754 float32");

constexpr std::string_view kManifestFormat = "TOPEMB1";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ContractViolation(std::string(what) + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string_view source) : bytes_(bytes), source_(source) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      fail(std::string("truncated while reading ") + what);
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(std::string(source_) + ": byte " + std::to_string(pos_) + ": " + what);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

std::string default_bag_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "bag_%05zu", index);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> encode_archive(const EmbeddingArchive& archive) {
  std::vector<std::uint8_t> out(std::begin(kArchiveMagic), std::end(kArchiveMagic));
  put_u32(out, checked_u32(archive.feature_dim, "feature dimension"));
  put_u32(out, checked_u32(archive.bags.size(), "bag count"));
  for (const Bag& bag : archive.bags) {
    if (bag.features.cols() != archive.feature_dim) {
      throw ContractViolation("bag " + bag.id + " has " + std::to_string(bag.features.cols()) +
                              " feature columns, archive expects " + std::to_string(archive.feature_dim));
    }
    if (bag.label > 255) throw ContractViolation("bag " + bag.id + " label does not fit in u8");
    put_u32(out, checked_u32(bag.size(), "bag size"));
    out.push_back(static_cast<std::uint8_t>(bag.label));
    out.push_back(bag.instance_labels ? 1 : 0);
    if (bag.instance_labels) {
      if (bag.instance_labels->size() != bag.size()) {
        throw ContractViolation("bag " + bag.id + " instance label count differs from its size");
      }
      out.insert(out.end(), bag.instance_labels->begin(), bag.instance_labels->end());
    }
    for (double v : bag.features.data()) put_f32(out, static_cast<float>(v));
  }
  return out;
}

EmbeddingArchive decode_archive(std::span<const std::uint8_t> bytes, std::string_view source) {
  Reader in(bytes, source);
  auto magic = in.take(sizeof kArchiveMagic, "magic");
  if (std::memcmp(magic.data(), kArchiveMagic, sizeof kArchiveMagic) != 0) {
    throw FormatError(std::string(source) + ": bad magic (not a TOPEMB1 archive)");
  }
  EmbeddingArchive archive;
  archive.feature_dim = in.u32("feature dimension");
  const std::uint32_t count = in.u32("bag count");
  if (archive.feature_dim == 0 && count > 0) in.fail("feature dimension is zero");

  archive.bags.reserve(count);
  for (std::uint32_t b = 0; b < count; ++b) {
    Bag bag;
    bag.id = default_bag_id(b);
    const std::uint32_t n = in.u32("bag size");
    if (n == 0) in.fail("bag " + std::to_string(b) + " is empty");
    bag.label = in.u8("bag label");
    const std::uint8_t has_labels = in.u8("instance label flag");
    if (has_labels > 1) in.fail("instance label flag must be 0 or 1");
    if (has_labels) {
      auto raw = in.take(n, "instance labels");
      bag.instance_labels.emplace(raw.begin(), raw.end());
      for (auto v : *bag.instance_labels)
        if (v > 1) in.fail("instance labels must be 0 or 1");
    }
    const std::size_t values = static_cast<std::size_t>(n) * archive.feature_dim;
    auto raw = in.take(values * 4, "features");
    bag.features = Matrix(n, archive.feature_dim);
    auto dst = bag.features.data();
    for (std::size_t i = 0; i < values; ++i) {
      const std::uint32_t u = static_cast<std::uint32_t>(raw[4 * i]) |
                              static_cast<std::uint32_t>(raw[4 * i + 1]) << 8 |
                              static_cast<std::uint32_t>(raw[4 * i + 2]) << 16 |
                              static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
      const float f = std::bit_cast<float>(u);
      if (!std::isfinite(f)) in.fail("non-finite feature in bag " + std::to_string(b));
      dst[i] = f;
    }
    archive.bags.push_back(std::move(bag));
  }
  if (!in.done()) in.fail("trailing bytes after the last bag");
  return archive;
}

ArchiveManifest describe_archive(const EmbeddingArchive& archive, std::string_view source) {
  ArchiveManifest manifest;
  manifest.feature_dim = archive.feature_dim;
  std::uint64_t offset = kArchiveHeaderBytes;
  for (const Bag& bag : archive.bags) {
    manifest.bags.push_back({bag.id, bag.label, bag.size(), offset, std::string(source)});
    offset += 6 + (bag.instance_labels ? bag.size() : 0) + 4ull * bag.size() * archive.feature_dim;
  }
  return manifest;
}

std::string manifest_to_json(const ArchiveManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["format"] = kManifestFormat;
  doc["m"] = manifest.feature_dim;
  doc["bag_count"] = manifest.bags.size();
  auto& bags = doc["bags"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.bags) {
    bags.push_back({{"bag_id", e.bag_id},
                    {"label", e.label},
                    {"n_i", e.n_instances},
                    {"byte_offset", e.byte_offset},
                    {"source", e.source}});
  }
  return doc.dump(2) + "\n";
}

ArchiveManifest manifest_from_json(std::string_view text, std::string_view source) {
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("format").get<std::string>() != kManifestFormat) {
      throw FormatError(std::string(source) + ": manifest format is not " + std::string(kManifestFormat));
    }
    ArchiveManifest manifest;
    manifest.feature_dim = doc.at("m").get<std::size_t>();
    for (const auto& e : doc.at("bags")) {
      manifest.bags.push_back({e.at("bag_id").get<std::string>(), e.at("label").get<std::size_t>(),
                               e.at("n_i").get<std::size_t>(), e.at("byte_offset").get<std::uint64_t>(),
                               e.at("source").get<std::string>()});
    }
    if (doc.at("bag_count").get<std::size_t>() != manifest.bags.size()) {
      throw FormatError(std::string(source) + ": bag_count disagrees with the number of entries");
    }
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(source) + ": invalid manifest: " + e.what());
  }
}

std::filesystem::path manifest_path(const std::filesystem::path& archive_path) {
  return archive_path.string() + ".manifest.json";
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_archive(const std::filesystem::path& path, const EmbeddingArchive& archive,
                   std::string_view source) {
  const std::string origin = source.empty() ? path.filename().string() : std::string(source);
  write_file_atomic(path, encode_archive(archive));
  write_file_atomic(manifest_path(path), manifest_to_json(describe_archive(archive, origin)));
}

EmbeddingArchive read_archive(const std::filesystem::path& path) {
  EmbeddingArchive archive = decode_archive(read_file_bytes(path), path.string());
  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    std::ifstream in(mpath, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    const ArchiveManifest manifest = manifest_from_json(text.str(), mpath.string());
    if (manifest.bags.size() != archive.bags.size()) {
      throw FormatError(mpath.string() + ": manifest lists " + std::to_string(manifest.bags.size()) +
                        " bags, archive holds " + std::to_string(archive.bags.size()));
    }
    for (std::size_t i = 0; i < manifest.bags.size(); ++i) archive.bags[i].id = manifest.bags[i].bag_id;
  }
  return archive;
}

void validate_archive(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const EmbeddingArchive archive = decode_archive(bytes, path.string());
  const auto mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) throw FormatError(path.string() + ": missing manifest " + mpath.string());
  std::ifstream in(mpath, std::ios::binary);
  std::ostringstream text;
  text << in.rdbuf();
  const ArchiveManifest manifest = manifest_from_json(text.str(), mpath.string());
  const ArchiveManifest actual = describe_archive(archive, "");

  auto bad = [&](std::size_t i, const std::string& what) {
    throw FormatError(mpath.string() + ": bag " + std::to_string(i) + ": " + what);
  };
  if (manifest.feature_dim != archive.feature_dim) {
    throw FormatError(mpath.string() + ": m = " + std::to_string(manifest.feature_dim) +
                      " but the archive stores " + std::to_string(archive.feature_dim));
  }
  if (manifest.bags.size() != actual.bags.size()) {
    throw FormatError(mpath.string() + ": bag count disagrees with the archive");
  }
  for (std::size_t i = 0; i < actual.bags.size(); ++i) {
    const auto& want = manifest.bags[i];
    const auto& got = actual.bags[i];
    if (want.label != got.label) bad(i, "label mismatch");
    if (want.n_instances != got.n_instances) bad(i, "n_i mismatch");
    if (want.byte_offset != got.byte_offset) bad(i, "byte_offset mismatch");
  }
}

}  // namespace topmil
