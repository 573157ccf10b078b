#pragma once

// Small random models and datasets for exercising the network code.

#include "topicbot/corpus.hpp"
#include "topicbot/nmf.hpp"
#include "topicbot/seq2seq.hpp"

#include <cstdint>
#include <vector>

namespace topicbot::testing {

ModelConfig tiny_config(Index vocab = 20, Index hidden = 8, Index topics = 2,
                        std::size_t len = 4);

/// Nonnegative W with zero rows for the reserved ids, roughly half the
/// entries zero, and vocabulary tokens "w4", "w5", ...
TopicModel random_topics(Index vocab, Index topics, std::size_t membership_k, std::uint64_t seed);

/// Questions and answers of random ordinary words with random lengths.
std::vector<QAPair> random_pairs(std::size_t count, Index vocab, std::size_t question_len,
                                 std::size_t answer_len, std::uint64_t seed);

std::vector<const QAPair*> pointers(const std::vector<QAPair>& pairs);

Vector one_hot(Index size, TokenId id);

/// Parameters drawn from Uniform(-scale, scale), biases included, so that
/// every term of the network is exercised.
void randomize(ParamStore& params, double scale, std::uint64_t seed);

}  // namespace topicbot::testing
