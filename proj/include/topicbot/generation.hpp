#pragma once

// Response generation: greedy decoding and the Metropolis–Hastings word
// sampler driven by per-position answer marginals.

#include "topicbot/corpus.hpp"
#include "topicbot/seq2seq.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace topicbot {

/// Row i is the smoothed marginal p^(i) of the i-th answer word.
struct ProposalTable {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rows;  // ℓ′ × V, each row sums to 1, all entries > 0

  std::span<const double> row(std::size_t position) const;
  std::size_t positions() const { return static_cast<std::size_t>(rows.rows()); }
};

/// Position-wise counts of answer words (EOS included, PAD excluded) with
/// add-one smoothing.
ProposalTable build_proposal_table(const std::vector<QAPair>& answers, std::size_t vocab_size,
                                   std::size_t max_answer_len);

/// One Metropolis–Hastings chain over word ids. The target is given by its
/// unnormalized scores ψ; no normalization constant is ever computed.
class MhChain {
 public:
  /// Throws std::invalid_argument on size mismatch, a non-positive proposal
  /// entry, or an initial state with ψ = 0.
  MhChain(std::span<const double> target, std::span<const double> proposal, TokenId initial);

  /// Proposes ω′ ~ proposal and accepts with
  /// λ = min(ψ(ω′) p(ω) / (ψ(ω) p(ω′)), 1).
  TokenId step(std::mt19937_64& rng);

  TokenId state() const { return state_; }
  double last_acceptance() const { return last_lambda_; }
  std::size_t accepted() const { return accepted_; }

 private:
  std::span<const double> target_;
  std::span<const double> proposal_;
  std::discrete_distribution<TokenId> draw_;
  TokenId state_;
  double last_lambda_ = 0.0;
  std::size_t accepted_ = 0;
};

/// Runs `steps` chain steps from `initial` and returns the final state.
TokenId mh_sample_word(std::span<const double> target, std::span<const double> proposal,
                       std::size_t steps, TokenId initial, std::mt19937_64& rng);
TokenId mh_sample_word(const PredictedDistribution& target, std::span<const double> proposal,
                       std::size_t steps, std::uint64_t seed);

enum class DecodeMode { kGreedy, kMetropolisHastings };

struct GenerationOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  std::size_t mh_steps = 50;  // chain steps per word
};

struct GenerationResult {
  std::vector<TokenId> ids;  // without the terminating EOS
  std::string text;
  std::vector<Vector> topic_weights;    // α^(o) per step
  std::vector<Vector> message_weights;  // α^(c) per step
  TopicCode code;
  std::vector<bool> topic_word;  // per emitted word: member of some topic set
};

/// Greedy decoding: argmax of p̂_t with ties to the lowest id. PAD and SOS are
/// never emitted; decoding stops at EOS or after ℓ′ words.
GenerationResult generate_greedy(const Seq2SeqModel& model, const Vocabulary& vocab,
                                 const std::string& question);

/// Per position, starts a chain at the greedy word and runs `mh_steps` steps
/// against proposal row i.
GenerationResult generate_mh(const Seq2SeqModel& model, const Vocabulary& vocab,
                             const ProposalTable& proposal, const std::string& question,
                             std::size_t mh_steps, std::mt19937_64& rng);

GenerationResult generate(const Seq2SeqModel& model, const Vocabulary& vocab,
                          const ProposalTable& proposal, const std::string& question,
                          const GenerationOptions& options, std::mt19937_64& rng);

/// The ids a question encodes to for this model (EOS-terminated, padded).
std::vector<TokenId> encode_question(const Seq2SeqModel& model, const Vocabulary& vocab,
                                     const std::string& question);

}  // namespace topicbot
