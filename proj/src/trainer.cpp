#include "ultra/trainer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ultra/error.hpp"
#include "ultra/rng.hpp"

namespace ultra {
namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kAugmentStream = 0x61756775ULL;

}  // namespace

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (total_epochs() == 0) throw std::invalid_argument("TrainConfig: no epochs");
  if (!(lr_decay > 0.0)) throw std::invalid_argument("TrainConfig: lr_decay must be > 0");
  if (kappa.n_bins < 2) throw std::invalid_argument("TrainConfig: kappa bins must be >= 2");
}

int stage_of(const TrainConfig& config, std::size_t epoch) {
  return epoch < config.stage1_epochs ? 1 : 2;
}

ParamGroup trainable_groups(int stage) {
  return stage == 1 ? (ParamGroup::Backbone | ParamGroup::Regression) : ParamGroup::All;
}

LossWeights stage_loss_weights(const UltraConfig& model, int stage) {
  if (stage == 1) return {0.0, 1.0, trainable_groups(1)};
  LossWeights w = loss_weights_for(model);
  w.trainable = ParamGroup::All;
  return w;
}

double train_step(UltraModel& model, std::span<const data::Sample* const> batch,
                  std::span<const std::uint64_t> aug_seeds, nn::AdamState& optimizer,
                  std::size_t epoch, const TrainConfig& config, double* dist_grad_sum) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (aug_seeds.size() != batch.size()) throw std::invalid_argument("train_step: seed count");
  const int stage = stage_of(config, epoch);
  const LossWeights weights = stage_loss_weights(model.config(), stage);
  ModelGrads grads = model.make_grads();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SampleLoss l = accumulate_sample_gradient(model, batch[i]->patch, batch[i]->label,
                                                    aug_seeds[i], weights, scale, grads);
    total += l.total;
    if (dist_grad_sum) *dist_grad_sum += std::sqrt(l.dist_grad_sq);
  }
  const double mean_loss = total * scale;
  if (!std::isfinite(mean_loss)) {
    throw NonFiniteError("train_step: non-finite batch loss at epoch " + std::to_string(epoch));
  }
  optimizer.config.lr =
      nn::lr_schedule(config.adam.lr, epoch, config.lr_decay, config.lr_decay_every);
  const auto params = model.parameters(weights.trainable);
  const auto views = grads.views(weights.trainable);
  nn::adam_step(params, views, optimizer);
  return mean_loss;
}

metrics::EvalPairs predict_pairs(const UltraModel& model, const data::Dataset& samples,
                                 std::uint64_t eval_seed) {
  metrics::EvalPairs pairs;
  pairs.preds.reserve(samples.size());
  pairs.targets.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Prediction p = model.predict(samples[i].patch, derive_seed(eval_seed, i));
    pairs.preds.push_back(model.reported_score(p));
    pairs.targets.push_back(samples[i].label);
  }
  return pairs;
}

ValMetrics validation_metrics(const UltraModel& model, const data::Dataset& val,
                              const TrainConfig& config) {
  const metrics::EvalPairs pairs = predict_pairs(model, val, config.eval_seed);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ValMetrics m{metrics::mse(pairs), nan, nan};
  try {
    m.icc = metrics::icc(pairs, config.icc_form);
  } catch (const DegenerateInput&) {
  } catch (const std::invalid_argument&) {
  }
  m.kappa = metrics::cohen_kappa(pairs, config.kappa);
  return m;
}

Trainer::Trainer(TrainConfig config, const data::Dataset& train, const data::Dataset& val,
                 TrainState state)
    : config_(std::move(config)), train_(train), val_(val), state_(std::move(state)) {
  config_.validate();
  if (train_.empty()) throw std::invalid_argument("Trainer: empty training set");
  if (val_.empty()) throw std::invalid_argument("Trainer: empty validation set");
  state_.adam.config.beta1 = config_.adam.beta1;
  state_.adam.config.beta2 = config_.adam.beta2;
  state_.adam.config.eps = config_.adam.eps;
}

EpochLog Trainer::run_epoch() {
  if (done()) throw std::logic_error("Trainer: training already complete");
  const std::size_t epoch = state_.epoch;
  const int stage = stage_of(config_, epoch);
  if (epoch == config_.stage1_epochs && epoch > 0) state_.adam.reset();

  const std::size_t n = train_.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle(derive_seed(derive_seed(config_.seed, kShuffleStream), epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
  const std::uint64_t aug_base = derive_seed(derive_seed(config_.seed, kAugmentStream), epoch);

  double loss_sum = 0.0;
  double dist_grad_sum = 0.0;
  std::vector<const data::Sample*> batch;
  std::vector<std::uint64_t> seeds;
  for (std::size_t start = 0; start < n; start += config_.batch_size) {
    const std::size_t end = std::min(n, start + config_.batch_size);
    batch.clear();
    seeds.clear();
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&train_[order[i]]);
      seeds.push_back(derive_seed(aug_base, order[i]));
    }
    const double l =
        train_step(state_.model, batch, seeds, state_.adam, epoch, config_, &dist_grad_sum);
    loss_sum += l * static_cast<double>(batch.size());
  }
  state_.epoch = epoch + 1;

  const ValMetrics val = validation_metrics(state_.model, val_, config_);
  EpochLog log;
  log.epoch = epoch;
  log.stage = stage;
  log.lr = nn::lr_schedule(config_.adam.lr, epoch, config_.lr_decay, config_.lr_decay_every);
  log.train_loss = loss_sum / static_cast<double>(n);
  log.val_mse = val.mse;
  log.val_icc = val.icc;
  log.val_kappa = val.kappa;
  log.dist_grad_norm = dist_grad_sum / static_cast<double>(n);

  if (val.mse < state_.best_val_mse) {
    state_.best_val_mse = val.mse;
    state_.best_epoch = epoch;
    best_ = state_;
  }
  return log;
}

TrainState initial_state(const UltraConfig& model, const TrainConfig& train_cfg,
                         const data::Dataset& train) {
  TrainState s{UltraModel(model), nn::AdamState(train_cfg.adam)};
  s.model.set_norm(data::compute_norm_stats(train));
  return s;
}

TrainResult two_stage_train(TrainState state, const data::Dataset& train, const data::Dataset& val,
                            const TrainConfig& config,
                            const std::function<void(const EpochLog&, const Trainer&)>& on_epoch) {
  Trainer trainer(config, train, val, std::move(state));
  TrainResult result{{}, trainer.state(), trainer.state()};
  while (!trainer.done()) {
    result.log.push_back(trainer.run_epoch());
    if (on_epoch) on_epoch(result.log.back(), trainer);
  }
  result.final_state = trainer.state();
  result.best_state = trainer.best() ? *trainer.best() : trainer.state();
  return result;
}

}  // namespace ultra
