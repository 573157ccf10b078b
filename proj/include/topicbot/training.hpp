#pragma once

#include "topicbot/corpus.hpp"
#include "topicbot/seq2seq.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace topicbot {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t iterations = 1000;  // one iteration = one batch
  double learning_rate = 0.01;
  double adagrad_eps = 1e-10;
  double teacher_forcing = 1.0;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct LossReport {
  std::vector<double> losses;  // mean nats/word of each training batch
  double wall_seconds = 0.0;
  /// Teacher-forced mean loss over the whole training set after the last
  /// update, dropout off; identical to evaluate() on the same data.
  double final_loss = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t iteration, std::size_t batch)
      : std::runtime_error(what), iteration_(iteration), batch_(batch) {}
  std::size_t iteration() const { return iteration_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t iteration_;
  std::size_t batch_;
};

struct TrainHooks {
  std::function<void(std::size_t iter, double loss, double elapsed_s)> on_iteration;
  std::size_t checkpoint_every = 0;
  std::function<void(std::size_t iter, const Seq2SeqModel&)> on_checkpoint;
};

/// D(p‖p̂) for a one-hot p at `target`: −log p̂(target), floored at 1e-300.
double kl_loss(TokenId target, const Vector& predicted);

/// Teacher-forced BPTT with global-norm clipping and Adagrad, updating the
/// model in place. Batch order is a seeded shuffle per epoch.
/// Throws TrainingError on a non-finite loss.
LossReport train_model(Seq2SeqModel& model, const std::vector<QAPair>& dataset,
                       const TrainConfig& config, const TrainHooks& hooks = {});

struct TrainResult {
  Seq2SeqModel model;
  LossReport report;
};

TrainResult train(const std::vector<QAPair>& dataset, std::optional<TopicModel> topics,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainHooks& hooks = {});

/// Mean teacher-forced loss per non-PAD answer position, dropout off.
double evaluate(const Seq2SeqModel& model, const std::vector<QAPair>& dataset);

}  // namespace topicbot
