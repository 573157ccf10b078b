#include "topicbot/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace topicbot {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(adagrad_eps > 0.0)) throw std::invalid_argument("adagrad_eps must be > 0");
  if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0)) {
    throw std::invalid_argument("teacher_forcing must lie in [0, 1]");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"iterations", iterations},
          {"learning_rate", learning_rate}, {"adagrad_eps", adagrad_eps},
          {"teacher_forcing", teacher_forcing}, {"clip_norm", clip_norm},
          {"seed", seed}};
}

double kl_loss(TokenId target, const Vector& predicted) {
  if (target < 0 || target >= predicted.size()) {
    throw std::invalid_argument("kl_loss: target outside the distribution");
  }
  return -std::log(std::max(predicted[target], 1e-300));
}

LossReport train_model(Seq2SeqModel& model, const std::vector<QAPair>& dataset,
                       const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");

  std::seed_seq order_seed{config.seed, std::uint64_t{0x6f72646572}};
  std::seed_seq noise_seed{config.seed, std::uint64_t{0x6e6f697365}};
  std::mt19937_64 order_rng(order_seed);
  std::mt19937_64 noise_rng(noise_seed);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle on the first batch
  std::size_t batch_in_epoch = 0;

  Seq2SeqModel::TrainOptions opts;
  opts.train = true;
  opts.teacher_forcing = config.teacher_forcing;
  opts.rng = &noise_rng;

  LossReport report;
  report.losses.reserve(config.iterations);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<const QAPair*> batch;
  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
      batch_in_epoch = 0;
    }
    batch.clear();
    for (; cursor < order.size() && batch.size() < config.batch_size; ++cursor) {
      batch.push_back(&dataset[order[cursor]]);
    }

    model.params().zero_grad();
    const auto res = model.batch_loss(batch, opts, true);
    const double loss = res.mean();
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite training loss at iteration " << iter << " (batch " << batch_in_epoch
          << " of the current epoch)";
      throw TrainingError(msg.str(), iter, batch_in_epoch);
    }
    if (config.clip_norm > 0.0) model.params().clip_grad_norm(config.clip_norm);
    model.params().adagrad_step(config.learning_rate, config.adagrad_eps);
    ++batch_in_epoch;

    report.losses.push_back(loss);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (hooks.on_iteration) hooks.on_iteration(iter, loss, elapsed);
    if (hooks.checkpoint_every > 0 && hooks.on_checkpoint && iter % hooks.checkpoint_every == 0) {
      hooks.on_checkpoint(iter, model);
    }
  }
  model.params().zero_grad();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.final_loss = evaluate(model, dataset);
  return report;
}

TrainResult train(const std::vector<QAPair>& dataset, std::optional<TopicModel> topics,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainHooks& hooks) {
  Seq2SeqModel model = Seq2SeqModel::initialize(model_config, std::move(topics), train_config.seed);
  LossReport report = train_model(model, dataset, train_config, hooks);
  return {std::move(model), std::move(report)};
}

double evaluate(const Seq2SeqModel& model, const std::vector<QAPair>& dataset) {
  std::vector<const QAPair*> all;
  all.reserve(dataset.size());
  for (const auto& p : dataset) all.push_back(&p);
  return model.batch_loss(all, Seq2SeqModel::TrainOptions{}).mean();
}

}  // namespace topicbot
