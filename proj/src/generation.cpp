#include "topicbot/generation.hpp"

#include <algorithm>
#include <stdexcept>

namespace topicbot {

std::span<const double> ProposalTable::row(std::size_t position) const {
  if (rows.rows() == 0) throw std::out_of_range("empty proposal table");
  const auto i = static_cast<Index>(std::min(position, positions() - 1));
  return {rows.data() + i * rows.cols(), static_cast<std::size_t>(rows.cols())};
}

ProposalTable build_proposal_table(const std::vector<QAPair>& answers, std::size_t vocab_size,
                                   std::size_t max_answer_len) {
  if (vocab_size == 0 || max_answer_len == 0) {
    throw std::invalid_argument("build_proposal_table: empty vocabulary or length");
  }
  const auto V = static_cast<Index>(vocab_size);
  const auto L = static_cast<Index>(max_answer_len);
  Matrix counts = Matrix::Zero(L, V);
  for (const auto& pair : answers) {
    for (Index i = 0; i < L && i < static_cast<Index>(pair.answer.size()); ++i) {
      const TokenId id = pair.answer[static_cast<std::size_t>(i)];
      if (id == kPad) break;
      if (id < 0 || id >= V) throw std::invalid_argument("answer id outside the vocabulary");
      counts(i, id) += 1.0;
    }
  }
  ProposalTable table;
  table.rows.resize(L, V);
  for (Index i = 0; i < L; ++i) {
    const double total = counts.row(i).sum() + static_cast<double>(V);
    for (Index w = 0; w < V; ++w) table.rows(i, w) = (counts(i, w) + 1.0) / total;
  }
  return table;
}

MhChain::MhChain(std::span<const double> target, std::span<const double> proposal,
                 TokenId initial)
    : target_(target), proposal_(proposal), state_(initial) {
  if (target.size() != proposal.size() || target.empty()) {
    throw std::invalid_argument("MhChain: target and proposal sizes differ");
  }
  for (double p : proposal) {
    if (!(p > 0.0)) throw std::invalid_argument("MhChain: proposal must be strictly positive");
  }
  if (initial < 0 || static_cast<std::size_t>(initial) >= target.size() ||
      !(target[static_cast<std::size_t>(initial)] > 0.0)) {
    throw std::invalid_argument("MhChain: initial state must have positive target mass");
  }
  draw_ = std::discrete_distribution<TokenId>(proposal.begin(), proposal.end());
}

TokenId MhChain::step(std::mt19937_64& rng) {
  const TokenId cand = draw_(rng);
  const auto cur = static_cast<std::size_t>(state_);
  const auto nxt = static_cast<std::size_t>(cand);
  const double ratio = (target_[nxt] * proposal_[cur]) / (target_[cur] * proposal_[nxt]);
  const double lambda = std::min(ratio, 1.0);
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::logic_error("MhChain: acceptance probability outside [0, 1]");
  }
  last_lambda_ = lambda;
  bool accept = lambda >= 1.0;
  if (!accept && lambda > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    accept = u(rng) < lambda;
  }
  if (accept) {
    state_ = cand;
    ++accepted_;
  }
  return state_;
}

TokenId mh_sample_word(std::span<const double> target, std::span<const double> proposal,
                       std::size_t steps, TokenId initial, std::mt19937_64& rng) {
  if (steps < 1) throw std::invalid_argument("mh_sample_word: steps must be >= 1");
  MhChain chain(target, proposal, initial);
  for (std::size_t i = 0; i < steps; ++i) chain.step(rng);
  return chain.state();
}

TokenId mh_sample_word(const PredictedDistribution& target, std::span<const double> proposal,
                       std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::span<const double> psi(target.unnormalized.data(),
                              static_cast<std::size_t>(target.unnormalized.size()));
  return mh_sample_word(psi, proposal, steps, static_cast<TokenId>(argmax(psi)), rng);
}

std::vector<TokenId> encode_question(const Seq2SeqModel& model, const Vocabulary& vocab,
                                     const std::string& question) {
  return encode_sentence(tokenize(question), vocab, model.config().max_question_len, true);
}

namespace {

// Scores with the never-emitted ids zeroed.
Vector emit_scores(const PredictedDistribution& dist) {
  Vector psi = dist.unnormalized;
  psi[kPad] = 0.0;
  psi[kSos] = 0.0;
  return psi;
}

GenerationResult run_generation(const Seq2SeqModel& model, const Vocabulary& vocab,
                                const std::string& question, const ProposalTable* proposal,
                                std::size_t mh_steps, std::mt19937_64* rng) {
  if (static_cast<Index>(vocab.size()) != model.config().vocab_size) {
    throw std::invalid_argument("vocabulary size differs from the model");
  }
  const auto ids = encode_question(model, vocab, question);
  DecodeState state = model.start(ids);
  GenerationResult out;
  out.code = state.code;

  TokenId prev = kSos;
  Vector prev_dist;
  const TopicModel* topics = model.topics();
  for (std::size_t t = 0; t < model.config().max_answer_len; ++t) {
    const bool dense = model.config().feed_distribution && t > 0;
    DecodeStep step = model.step(state, prev, dense ? &prev_dist : nullptr);
    const Vector psi = emit_scores(step.dist);
    std::span<const double> psi_span(psi.data(), static_cast<std::size_t>(psi.size()));
    TokenId word = static_cast<TokenId>(argmax(psi_span));
    if (proposal) {
      MhChain chain(psi_span, proposal->row(t), word);
      for (std::size_t k = 0; k < mh_steps; ++k) chain.step(*rng);
      word = chain.state();
    }
    out.topic_weights.push_back(std::move(step.topic_weights));
    out.message_weights.push_back(std::move(step.message_weights));
    if (word == kEos) break;
    out.ids.push_back(word);
    out.topic_word.push_back(topics && topics->in_any_topic(word));
    prev = word;
    prev_dist = std::move(step.dist.probs);
  }
  out.text = join_tokens(decode_ids(out.ids, vocab));
  return out;
}

}  // namespace

GenerationResult generate_greedy(const Seq2SeqModel& model, const Vocabulary& vocab,
                                 const std::string& question) {
  return run_generation(model, vocab, question, nullptr, 0, nullptr);
}

GenerationResult generate_mh(const Seq2SeqModel& model, const Vocabulary& vocab,
                             const ProposalTable& proposal, const std::string& question,
                             std::size_t mh_steps, std::mt19937_64& rng) {
  if (proposal.rows.cols() != model.config().vocab_size) {
    throw std::invalid_argument("proposal table width differs from the vocabulary");
  }
  return run_generation(model, vocab, question, &proposal, mh_steps, &rng);
}

GenerationResult generate(const Seq2SeqModel& model, const Vocabulary& vocab,
                          const ProposalTable& proposal, const std::string& question,
                          const GenerationOptions& options, std::mt19937_64& rng) {
  if (options.mode == DecodeMode::kGreedy) return generate_greedy(model, vocab, question);
  return generate_mh(model, vocab, proposal, question, options.mh_steps, rng);
}

}  // namespace topicbot
