#pragma once

// Nonnegative matrix factorization of document-term matrices, topic word
// sets, and question topic codes.

#include "topicbot/corpus.hpp"
#include "topicbot/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace topicbot {

struct NmfOptions {
  Index rank = 10;
  int max_iters = 500;
  /// Stop once the relative objective decrease of one iteration drops below tol.
  double tol = 1e-6;
  std::uint64_t seed = 0;
  double eps = 1e-12;
  /// Multiplicative updates applied to H, then to W, per iteration. Repeats
  /// reuse the products WᵀX, WᵀW (resp. XHᵀ, HHᵀ) of the iteration, so they
  /// are cheap; every repeat is itself a Lee–Seung update. 1 gives the
  /// textbook alternation.
  int inner_updates = 20;
  /// Optional per-update hook (after H and after W), used to assert
  /// nonnegativity in tests.
  std::function<void(const Matrix& W, const Matrix& H)> on_update;
};

struct NmfResult {
  Matrix W;  // V × r
  Matrix H;  // r × n
  /// ‖X − WH‖²_F at initialization and after each iteration.
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// Lee–Seung multiplicative updates (accelerated by inner repeats) for min ‖X − WH‖²_F with W, H ≥ 0.
/// Throws std::invalid_argument on a negative entry of X or a rank outside
/// [1, min(V, n)].
NmfResult nmf_factorize(const SparseMatrix& X, const NmfOptions& options);
NmfResult nmf_factorize(const Matrix& X, const NmfOptions& options);

double relative_error(const Matrix& X, const Matrix& W, const Matrix& H);

/// Topic code k of a question, one coefficient per topic.
struct TopicCode {
  Vector k;
  bool normalized = false;
};

/// W over a vocabulary together with the membership sets that define the
/// indicator 1(ω ∈ w_j): the top-K weighted words of each column.
class TopicModel {
 public:
  TopicModel() = default;
  /// Throws std::invalid_argument when W has a negative entry or the row
  /// count differs from the vocabulary size.
  TopicModel(Matrix W, std::vector<std::string> vocab_tokens, std::size_t membership_k,
             std::string source);

  const Matrix& W() const { return W_; }
  Index rank() const { return W_.cols(); }
  Index vocab_size() const { return W_.rows(); }
  std::size_t membership_k() const { return membership_k_; }
  const std::string& source() const { return source_; }
  const std::vector<std::string>& vocab_tokens() const { return vocab_tokens_; }
  std::uint64_t vocab_hash() const;
  std::uint64_t content_hash() const;
  const std::vector<std::vector<TokenId>>& topic_word_sets() const { return word_sets_; }
  bool in_topic(TokenId word, Index topic) const;
  bool in_any_topic(TokenId word) const;

  /// bias(ω) = Σ_j k_j · 1(ω ∈ topic_word_set_j), a length-V vector.
  Vector bias_vector(const TopicCode& code) const;

  bool operator==(const TopicModel& other) const;

 private:
  Matrix W_;
  std::vector<std::string> vocab_tokens_;
  std::size_t membership_k_ = 0;
  std::string source_;
  std::vector<std::vector<TokenId>> word_sets_;
  std::vector<std::uint8_t> any_topic_;
};

/// Ids of the largest-weight nonzero entries of column j, descending weight,
/// ties by id. Throws std::out_of_range for a bad topic index.
std::vector<TokenId> top_word_ids(const Matrix& W, Index j, std::size_t k);
std::vector<std::string> top_words(const TopicModel& model, Index j, std::size_t k);

/// k = Wᵀ q_bow, divided by its sum when `normalize` and the sum is positive.
TopicCode topic_code(const Vector& q_bow, const TopicModel& model, bool normalize);

struct SparseCodeResult {
  Vector k;
  std::vector<double> objective;  // ‖q − Wk‖² + λ‖k‖₁ at start and after each sweep
  int sweeps = 0;
};

/// Cyclic coordinate descent with soft-thresholding for
/// min ‖q − Wk‖²_F + λ‖k‖₁, clamped to k ≥ 0.
SparseCodeResult sparse_code(const Vector& q, const Matrix& W, double lambda, int max_iters,
                             double tol);

/// Re-indexes W rows from the model's vocabulary onto `target`; words the
/// topic corpus never saw get zero rows. Word sets are recomputed.
TopicModel align_topics(const TopicModel& model, const Vocabulary& target);

/// Manifest fields (V, r, K, source, vocab hash, vocabulary, word sets).
/// W travels separately as a blob.
nlohmann::json topic_model_meta(const TopicModel& model);
/// Rebuilds a model from its manifest and W, verifying the stored word sets
/// and vocabulary hash. Throws std::runtime_error on mismatch.
TopicModel topic_model_from_meta(const nlohmann::json& meta, Matrix W);

void save_topic_model(const TopicModel& model, const std::filesystem::path& path);
TopicModel load_topic_model(const std::filesystem::path& path);

}  // namespace topicbot
