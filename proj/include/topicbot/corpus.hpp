#pragma once

// Text ingestion: tokenization, vocabularies, padded QA datasets and
// document-term matrices.

#include "topicbot/tensor.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace topicbot {

using TokenId = std::int32_t;
using Tokens = std::vector<std::string>;
using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kSos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr std::size_t kReservedCount = 4;

/// Lowercases ASCII letters and splits on whitespace; every ASCII punctuation
/// character becomes its own token. Bytes >= 0x80 are kept inside words.
Tokens tokenize(std::string_view text);

Tokens remove_stopwords(const Tokens& tokens, const std::unordered_set<std::string>& stop);

/// Bidirectional token ↔ id map. Ids 0-3 are <pad>, <unk>, <sos>, <eos>.
class Vocabulary {
 public:
  /// Only the reserved tokens.
  Vocabulary();

  /// Builds from an id-ordered token list; the first four must be the
  /// reserved tokens. Throws std::invalid_argument otherwise or on duplicates.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  /// UNK for unknown tokens.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  struct Empty {};
  explicit Vocabulary(Empty) {}

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps the most frequent tokens so that the vocabulary, reserved tokens
/// included, holds at most `cap` entries. Ties break lexicographically.
Vocabulary build_vocabulary(const std::vector<Tokens>& streams, std::size_t cap);

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

/// Maps tokens to ids (OOV → UNK), truncates and pads with PAD to exactly
/// max_len. With append_eos one slot is kept for the terminating EOS.
std::vector<TokenId> encode_sentence(const Tokens& tokens, const Vocabulary& vocab,
                                     std::size_t max_len, bool append_eos);

/// Inverse of encode_sentence: stops at the first EOS and drops PAD.
Tokens decode_ids(std::span<const TokenId> ids, const Vocabulary& vocab);

std::string join_tokens(const Tokens& tokens);

/// Occurrence counts over the vocabulary; reserved ids and OOV words stay 0.
Vector bag_of_words(const Tokens& doc, const Vocabulary& vocab);

struct DocTermMatrix {
  SparseMatrix counts;  // rows = words, cols = documents
  std::vector<std::string> doc_ids;
};

DocTermMatrix build_doc_term_matrix(const std::vector<Tokens>& docs, const Vocabulary& vocab,
                                    std::vector<std::string> doc_ids = {});

/// tf(w,d)·(ln((1+n)/(1+df(w))) + 1), then each column L2-normalized.
/// All-zero columns stay zero.
SparseMatrix tfidf_transform(const SparseMatrix& counts);

struct QAPair {
  std::vector<TokenId> question;  // length ℓ, EOS-terminated, PAD-filled
  std::vector<TokenId> answer;    // length ℓ′, EOS at answer_length
  std::size_t question_length = 0;
  std::size_t answer_length = 0;
};

struct QAText {
  std::string question;
  std::string answer;
};

QAPair make_qa_pair(const Tokens& question, const Tokens& answer, const Vocabulary& vocab,
                    std::size_t max_question_len, std::size_t max_answer_len);

/// Reads the JSONL QA corpus ({"q": ..., "a": ...} per line; blank lines
/// skipped). Throws std::runtime_error naming the offending line.
std::vector<QAText> read_qa_jsonl(const std::filesystem::path& path);

std::vector<QAPair> load_qa_pairs(const std::filesystem::path& path, const Vocabulary& vocab,
                                  std::size_t max_question_len, std::size_t max_answer_len);

std::vector<QAPair> encode_qa_pairs(const std::vector<QAText>& texts, const Vocabulary& vocab,
                                    std::size_t max_question_len, std::size_t max_answer_len);

struct Document {
  std::string id;
  std::string text;
};

/// A plain-text file (one document per non-empty line) or a directory of
/// .txt files (one document each, sorted by file name).
std::vector<Document> load_documents(const std::filesystem::path& path);

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);

}  // namespace topicbot
