#pragma once

// GRU encoder-decoder with message attention, topic attention, and an output
// distribution biased toward the words of the question's topics.

#include "topicbot/corpus.hpp"
#include "topicbot/nmf.hpp"
#include "topicbot/param_store.hpp"
#include "topicbot/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace topicbot {

struct ModelConfig {
  Index vocab_size = 0;
  Index hidden = 64;  // embedding and hidden width d
  std::size_t max_question_len = 25;
  std::size_t max_answer_len = 25;
  Index topics = 0;  // r; 0 builds the non-topic model
  Index attention = 64;
  double dropout = 0.1;
  std::size_t membership_k = 100;
  /// Adds Σ_j k_j 1(ω ∈ w_j) exp(Ψ^(o)(ω)) to the output scores.
  bool topic_bias = true;
  /// Ψ = σ(·) as written; false uses the raw affine scores (logit ablation).
  bool sigmoid_scores = true;
  /// Feed p̂_{t−1} instead of a one-hot of the previous word.
  bool feed_distribution = false;
  /// Sum-to-one topic codes.
  bool normalize_code = true;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct EncoderOutput {
  std::vector<Vector> states;  // h_1 … h_ℓ
  const Vector& last() const { return states.back(); }
};

struct AttentionResult {
  Vector context;  // c_t (dim d) or o_t (dim V)
  Vector weights;  // α
};

/// probs ∝ unnormalized; ψ(ω) = unnormalized(ω) · exp(log_scale).
struct PredictedDistribution {
  Vector probs;
  Vector unnormalized;
  double log_scale = 0.0;
};

// Reference forms of the per-step equations. They operate on a ParamStore
// laid out by Seq2SeqModel::param_specs and are written for clarity; the
// model's batched path below computes the same quantities.

/// z=σ(W_z x+U_z h+b_z); r=σ(W_r x+U_r h+b_r); s=tanh(W_s x+U_s(h⊙r)+b_s);
/// h_t=(1−z)⊙s+z⊙h.
Vector gru_step(const Vector& x, const Vector& h_prev, const ParamStore& params);

/// ξ_j = v_cᵀ tanh(A_c s + B_c h_j + b_c), α = softmax(ξ), c = Σ α_j h_j.
AttentionResult message_attention(const Vector& s_prev, const std::vector<Vector>& states,
                                  const ParamStore& params);

/// ξ_j = v_oᵀ tanh(A_o s + C_o P w_j + D_o h_last + b_o), α = softmax(ξ),
/// o = Σ α_j w_j (word space).
AttentionResult topic_attention(const Vector& s_prev, const Matrix& topics,
                                const Vector& h_last, const ParamStore& params);

/// s_t = σ(W_p p̂ + W_s s + W_c c + W_o o + b). `topic_context` may be empty
/// for the non-topic model.
Vector decoder_step(const Vector& prev_output, const Vector& s_prev, const Vector& context,
                    const Vector& topic_context, const ParamStore& params);

/// ψ(ω) = exp(Ψ^(c)(ω)) + bias(ω)·exp(Ψ^(o)(ω)), normalized.
PredictedDistribution predict_distribution(const Vector& s, const Vector& prev_output,
                                           const Vector& context, const Vector& topic_context,
                                           const TopicCode* code, const TopicModel* topics,
                                           const ModelConfig& config, const ParamStore& params);

struct DecodeStep {
  PredictedDistribution dist;
  Vector message_weights;
  Vector topic_weights;
};

/// Incremental decoder for generation.
struct DecodeState {
  Matrix states;       // d × ℓ
  Matrix keys;         // B_c H, a × ℓ
  Vector topic_query;  // D_o h_ℓ
  Matrix topic_keys;   // C_o P W
  Matrix topic_state;  // W_o^(s) W
  Matrix topic_out;    // W_o^(o) W
  Vector s;
  Vector bias;  // empty when the bias term is inactive
  TopicCode code;
  std::size_t step = 0;
};

class Seq2SeqModel {
 public:
  /// Throws std::invalid_argument when the topic model is missing for r > 0,
  /// present for r = 0, or has the wrong shape, or when the parameter store
  /// does not match the configuration.
  Seq2SeqModel(ModelConfig config, ParamStore params, std::optional<TopicModel> topics);

  static std::vector<ParamSpec> param_specs(const ModelConfig& config);
  static Seq2SeqModel initialize(ModelConfig config, std::optional<TopicModel> topics,
                                 std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  const TopicModel* topics() const { return topics_ ? &*topics_ : nullptr; }
  bool bias_active() const { return topics_ && config_.topic_bias; }

  /// Code of a question from its raw word counts (reserved ids ignored).
  /// Empty code for the non-topic model.
  TopicCode code_for(std::span<const TokenId> question) const;

  EncoderOutput encode(std::span<const TokenId> question) const;

  DecodeState start(std::span<const TokenId> question) const;
  /// Runs one decoder step from the previous word (or distribution when
  /// `prev_dist` is given) and advances the state.
  DecodeStep step(DecodeState& state, TokenId prev, const Vector* prev_dist = nullptr) const;

  struct TrainOptions {
    bool train = false;             // dropout and teacher-forcing draws
    double teacher_forcing = 1.0;
    std::mt19937_64* rng = nullptr;  // required when train is set
  };

  struct BatchResult {
    double loss_sum = 0.0;
    std::size_t target_count = 0;
    double mean() const {
      return target_count ? loss_sum / static_cast<double>(target_count) : 0.0;
    }
  };

  /// Teacher-forced loss over a batch, summed over non-PAD answer positions.
  /// With `accumulate_grad`, adds ∇(mean loss) into params().grad.
  BatchResult batch_loss(std::span<const QAPair* const> batch, const TrainOptions& options,
                         bool accumulate_grad);
  BatchResult batch_loss(std::span<const QAPair* const> batch,
                         const TrainOptions& options) const;

 private:
  struct Impl;

  void check_question(std::span<const TokenId> question) const;

  ModelConfig config_;
  ParamStore params_;
  std::optional<TopicModel> topics_;
};

}  // namespace topicbot
