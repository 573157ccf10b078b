#pragma once

// Self-contained trained artifact: configuration, parameters, vocabulary,
// aligned topic model and MH proposal table in one container file.

#include "topicbot/corpus.hpp"
#include "topicbot/generation.hpp"
#include "topicbot/seq2seq.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace topicbot {

inline constexpr int kBundleVersion = 1;

struct BundleManifest {
  int version = kBundleVersion;
  std::uint64_t seed = 0;
  std::string qa_corpus_hash;     // fingerprint of the training QA file
  std::string topic_corpus_hash;  // content hash of the topic model, empty if none
  std::optional<std::int64_t> created_unix;  // omitted for reproducible bundles
  nlohmann::json train_config = nlohmann::json::object();
  double final_loss = 0.0;
};

struct ModelBundle {
  Seq2SeqModel model;
  Vocabulary vocab;
  ProposalTable proposal;
  BundleManifest manifest;
};

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);

/// Throws std::runtime_error on truncation, version mismatch, or a vocabulary
/// or topic-model hash that disagrees with the stored contents. Nothing is
/// returned on failure.
ModelBundle load_bundle(const std::filesystem::path& path);

std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace topicbot
