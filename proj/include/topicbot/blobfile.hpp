#pragma once

// Single-file container: a JSON manifest followed by named row-major float64
// blobs. Layout:
//
//   "TOPICBOT"            8 bytes magic
//   u32 format version    little-endian
//   u64 manifest length   little-endian
//   manifest JSON         {"kind", "meta", "blobs": [{name, rows, cols, offset}],
//                          "payload_fnv1a"}
//   payload               concatenated blobs, float64 little-endian

#include "topicbot/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace topicbot {

inline constexpr std::uint32_t kBlobFormatVersion = 1;

struct BlobFile {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> blobs;

  const Matrix& blob(const std::string& name) const;
  bool has_blob(const std::string& name) const;
};

std::string encode_blob_file(const BlobFile& file);
BlobFile decode_blob_file(const std::string& bytes, const std::string& expected_kind);

/// Writes through a temporary file and renames, so readers never observe a
/// partially written container.
void save_blob_file(const BlobFile& file, const std::filesystem::path& path);

/// Throws std::runtime_error on bad magic, version or kind mismatch,
/// truncation, or checksum mismatch.
BlobFile load_blob_file(const std::filesystem::path& path, const std::string& expected_kind);

}  // namespace topicbot
