#pragma once

// End-to-end steps shared by the command-line tool and the Python module:
// corpus → topic model, and QA corpus (+ topic model) → trained bundle.

#include "topicbot/bundle.hpp"
#include "topicbot/nmf.hpp"
#include "topicbot/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace topicbot {

struct TopicsBuildOptions {
  Index rank = 10;
  std::size_t membership_k = 100;
  std::uint64_t seed = 0;
  int max_iters = 500;
  double tol = 1e-6;
  std::size_t vocab_cap = 18004;  // reserved tokens included
  std::unordered_set<std::string> stopwords;
};

struct TopicsBuildResult {
  TopicModel model;
  NmfResult nmf;
  std::size_t documents = 0;
};

/// tokenize → stop-word removal → bag-of-words → TF-IDF → NMF → word sets.
/// Throws std::invalid_argument for an empty corpus or a rank larger than
/// the corpus allows.
TopicsBuildResult build_topic_model(const std::vector<Document>& docs,
                                    const TopicsBuildOptions& options);

struct BundleBuildOptions {
  ModelConfig model;  // vocab_size and topics are filled in from the data
  TrainConfig train;
  std::size_t vocab_cap = 18004;
  std::string qa_corpus_hash;
};

struct BundleBuildResult {
  ModelBundle bundle;
  LossReport report;
  std::vector<QAPair> dataset;
};

/// Builds the chatbot vocabulary from the QA texts, aligns the topic model
/// to it, trains, and packages everything as a bundle.
BundleBuildResult build_bundle(const std::vector<QAText>& corpus,
                               const std::optional<TopicModel>& topics,
                               const BundleBuildOptions& options, const TrainHooks& hooks = {});

Vocabulary build_qa_vocabulary(const std::vector<QAText>& corpus, std::size_t cap);

}  // namespace topicbot
