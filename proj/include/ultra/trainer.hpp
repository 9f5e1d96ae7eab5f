#pragma once

// Two-stage training: stage 1 fits the backbone and regression unit with the
// MSE loss (branch heads frozen), stage 2 trains every parameter with the
// configured loss. Adam moments restart at the stage boundary.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ultra/data.hpp"
#include "ultra/metrics.hpp"
#include "ultra/model.hpp"
#include "ultra/nn.hpp"

namespace ultra {

struct TrainConfig {
  nn::AdamConfig adam;  // adam.lr is the base learning rate
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 100;
  std::size_t batch_size = 8;
  std::size_t stage1_epochs = 50;
  std::size_t stage2_epochs = 100;
  std::uint64_t seed = 11;
  std::uint64_t eval_seed = 13;
  metrics::IccForm icc_form = metrics::IccForm::TwoWayRandomSingle;
  metrics::KappaConfig kappa;

  std::size_t total_epochs() const noexcept { return stage1_epochs + stage2_epochs; }
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  int stage = 1;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_icc = 0.0;
  double val_kappa = 0.0;
  double dist_grad_norm = 0.0;  // mean over samples of ||d(kl term)/d logits||
};

/// Everything needed to continue training bit-exactly.
struct TrainState {
  UltraModel model;
  nn::AdamState adam;
  std::size_t epoch = 0;  // completed epochs
  double best_val_mse = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
};

int stage_of(const TrainConfig& config, std::size_t epoch);
ParamGroup trainable_groups(int stage);
LossWeights stage_loss_weights(const UltraConfig& model, int stage);

/// One optimizer step over `batch`; returns the mean sample loss.
double train_step(UltraModel& model, std::span<const data::Sample* const> batch,
                  std::span<const std::uint64_t> aug_seeds, nn::AdamState& optimizer,
                  std::size_t epoch, const TrainConfig& config, double* dist_grad_sum = nullptr);

struct ValMetrics {
  double mse = 0.0;
  double icc = 0.0;
  double kappa = 0.0;
};

/// Predictions for every sample; sample i uses derive_seed(eval_seed, i).
metrics::EvalPairs predict_pairs(const UltraModel& model, const data::Dataset& samples,
                                 std::uint64_t eval_seed);
/// Undefined metrics come back as NaN.
ValMetrics validation_metrics(const UltraModel& model, const data::Dataset& val,
                              const TrainConfig& config);

class Trainer {
 public:
  Trainer(TrainConfig config, const data::Dataset& train, const data::Dataset& val,
          TrainState state);

  bool done() const noexcept { return state_.epoch >= config_.total_epochs(); }
  EpochLog run_epoch();

  const TrainState& state() const noexcept { return state_; }
  /// State captured at the epoch with the lowest validation MSE so far.
  const std::optional<TrainState>& best() const noexcept { return best_; }

 private:
  TrainConfig config_;
  const data::Dataset& train_;
  const data::Dataset& val_;
  TrainState state_;
  std::optional<TrainState> best_;
};

struct TrainResult {
  std::vector<EpochLog> log;
  TrainState final_state;
  TrainState best_state;
};

/// Fresh model with normalization statistics from `train`.
TrainState initial_state(const UltraConfig& model, const TrainConfig& train_cfg,
                         const data::Dataset& train);

TrainResult two_stage_train(TrainState state, const data::Dataset& train, const data::Dataset& val,
                            const TrainConfig& config,
                            const std::function<void(const EpochLog&, const Trainer&)>& on_epoch = {});

}  // namespace ultra
