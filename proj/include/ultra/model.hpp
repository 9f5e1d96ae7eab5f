#pragma once

// Multi-branch label-distribution network: a shared backbone, one MLP head
// per branch, weighted feature fusion, a softmax distribution head over the
// fused features and a sigmoid regression unit on the same features.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ultra/augment.hpp"
#include "ultra/data.hpp"
#include "ultra/label_dist.hpp"
#include "ultra/nn.hpp"

namespace ultra {

enum class LossMode {
  Joint,    // KL + alpha * MSE
  KlOnly,   // distribution learning only
  MseOnly,  // regression only
};

struct UltraConfig {
  std::size_t n_branches = 3;
  std::vector<double> branch_weights;  // empty means W_k = 1 for every branch
  double sigma = 0.04;
  double alpha = 1.0;
  std::size_t n_labels = 100;
  double epsilon_floor = 1e-12;
  ldl::KlDirection kl_direction = ldl::KlDirection::PredToTarget;
  LossMode loss_mode = LossMode::Joint;
  std::size_t input_height = 16;
  std::size_t input_width = 16;
  std::vector<std::size_t> backbone_hidden{128, 64};
  std::vector<std::size_t> head_hidden{64, 64};
  AugmentationSpec augmentation;
  std::uint64_t seed = 7;

  void validate() const;
  std::vector<double> resolved_weights() const;
  ldl::EncoderConfig encoder() const;
};

struct BranchFeatures {
  std::vector<double> values;
};

struct Prediction {
  ldl::LabelDistribution distribution;
  double ldl_score = 0.0;
  double reg_score = 0.0;
  double final_score = 0.0;
};

/// f_enhanced = (1/N) sum_k W_k f^k
std::vector<double> fuse(std::span<const BranchFeatures> features, std::span<const double> weights);

enum class ParamGroup : unsigned {
  Backbone = 1u << 0,
  Heads = 1u << 1,
  Regression = 1u << 2,
  All = 7u,
};

constexpr ParamGroup operator|(ParamGroup a, ParamGroup b) {
  return static_cast<ParamGroup>(static_cast<unsigned>(a) | static_cast<unsigned>(b));
}
constexpr bool has_group(ParamGroup set, ParamGroup g) {
  return (static_cast<unsigned>(set) & static_cast<unsigned>(g)) != 0;
}

/// Gradient buffers mirroring UltraModel's parameters.
struct ModelGrads {
  nn::MlpGrads backbone;
  std::vector<nn::MlpGrads> heads;
  nn::MlpGrads regression;

  void zero();
  /// Same order as UltraModel::parameters(groups).
  std::vector<std::span<const double>> views(ParamGroup groups = ParamGroup::All) const;
};

class UltraModel {
 public:
  explicit UltraModel(UltraConfig config);

  const UltraConfig& config() const noexcept { return config_; }
  const ldl::ScoreGrid& grid() const noexcept { return grid_; }
  std::size_t feature_dim() const noexcept { return config_.n_labels; }
  std::size_t input_dim() const noexcept { return config_.input_height * config_.input_width; }

  const nn::Mlp& backbone() const noexcept { return backbone_; }
  const nn::Mlp& head(std::size_t k) const { return heads_.at(k); }
  const nn::Mlp& regression() const noexcept { return regression_; }
  nn::Mlp& mutable_backbone() noexcept { return backbone_; }
  nn::Mlp& mutable_head(std::size_t k) { return heads_.at(k); }
  nn::Mlp& mutable_regression() noexcept { return regression_; }

  const data::NormStats& norm() const noexcept { return norm_; }
  void set_norm(const data::NormStats& norm);

  /// Parameter tensors in checkpoint order: backbone layers, heads in
  /// ascending branch order, then the regression unit (weights before bias).
  std::vector<std::span<double>> parameters(ParamGroup groups = ParamGroup::All);
  std::vector<std::span<const double>> parameters(ParamGroup groups = ParamGroup::All) const;
  std::size_t parameter_count() const;
  ModelGrads make_grads() const;

  /// f^k for branch k with augmentation drawn from `aug_seed`.
  BranchFeatures branch_forward(const data::Patch& patch, std::size_t k,
                                std::uint64_t aug_seed) const;

  /// Test-time prediction; branch k augments with derive_seed(seed, k).
  Prediction predict(const data::Patch& patch, std::uint64_t seed) const;

  /// Score used for evaluation: final_score for the joint loss, otherwise the
  /// output of the only head that was trained.
  double reported_score(const Prediction& p) const;

 private:
  UltraConfig config_;
  ldl::ScoreGrid grid_;
  data::NormStats norm_;
  nn::Mlp backbone_;
  std::vector<nn::Mlp> heads_;
  nn::Mlp regression_;
};

struct LossWeights {
  double kl = 1.0;
  double mse = 1.0;
  ParamGroup trainable = ParamGroup::All;
};

struct SampleLoss {
  double total = 0.0;
  double kl = 0.0;
  double mse = 0.0;
  double dist_grad_sq = 0.0;  // ||d(kl term)/d logits||^2
};

/// Forward and backward pass for one sample; gradients of `scale * loss` are
/// added into `grads` for the trainable groups only. Branch k augments with
/// derive_seed(aug_seed, k).
SampleLoss accumulate_sample_gradient(const UltraModel& model, const data::Patch& patch,
                                      double label, std::uint64_t aug_seed,
                                      const LossWeights& weights, double scale, ModelGrads& grads);

/// Loss only (no gradients); same randomness as accumulate_sample_gradient.
SampleLoss sample_loss(const UltraModel& model, const data::Patch& patch, double label,
                       std::uint64_t aug_seed, const LossWeights& weights);

/// Stage-2 loss weights for a loss mode.
LossWeights loss_weights_for(const UltraConfig& config);

}  // namespace ultra
