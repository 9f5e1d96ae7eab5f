#include "ultra/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ultra/error.hpp"
#include "ultra/rng.hpp"

namespace ultra {
namespace {

constexpr std::uint64_t kRegressionStream = 0x7265677265ULL;

nn::Mlp build_mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                  nn::Activation last, std::uint64_t seed) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::Relu);
  acts.back() = last;
  return nn::init_mlp(dims, acts, seed);
}

struct BranchPass {
  nn::Tape backbone;
  nn::Tape head;
};

struct ForwardPass {
  std::vector<BranchPass> branches;
  std::vector<double> fused;
  std::vector<double> probs;
  nn::Tape regression;
};

ForwardPass run_forward(const UltraModel& model, const data::Patch& patch, std::uint64_t aug_seed) {
  const auto& cfg = model.config();
  if (patch.height != cfg.input_height || patch.width != cfg.input_width) {
    throw std::invalid_argument("UltraModel: patch is " + std::to_string(patch.height) + "x" +
                                std::to_string(patch.width) + ", model expects " +
                                std::to_string(cfg.input_height) + "x" +
                                std::to_string(cfg.input_width));
  }
  const std::vector<double> weights = cfg.resolved_weights();
  ForwardPass pass;
  pass.branches.reserve(cfg.n_branches);
  pass.fused.assign(model.feature_dim(), 0.0);
  std::vector<double> input(model.input_dim());
  const double inv_n = 1.0 / static_cast<double>(cfg.n_branches);
  for (std::size_t k = 0; k < cfg.n_branches; ++k) {
    const data::Patch view = cfg.augmentation.is_identity()
                                 ? patch
                                 : augment(patch, cfg.augmentation, derive_seed(aug_seed, k));
    data::apply_norm_into(view, model.norm(), input);
    BranchPass bp;
    bp.backbone = nn::forward(model.backbone(), input);
    bp.head = nn::forward(model.head(k), bp.backbone.output());
    const auto f = bp.head.output();
    const double w = weights[k] * inv_n;
    for (std::size_t i = 0; i < f.size(); ++i) pass.fused[i] += w * f[i];
    pass.branches.push_back(std::move(bp));
  }
  for (double v : pass.fused) {
    if (!std::isfinite(v)) throw NonFiniteError("UltraModel: non-finite fused feature");
  }
  pass.probs = ldl::softmax(pass.fused);
  pass.regression = nn::forward(model.regression(), pass.fused);
  return pass;
}

SampleLoss evaluate_loss(const UltraModel& model, const ForwardPass& pass, double label,
                         const LossWeights& weights, std::vector<double>* dist_grad) {
  const ldl::EncoderConfig enc = model.config().encoder();
  const ldl::LabelDistribution target = ldl::encode(label, model.grid(), enc);
  SampleLoss loss;
  if (dist_grad) {
    dist_grad->assign(pass.probs.size(), 0.0);
    loss.kl = ldl::distribution_loss_grad(pass.probs, target, enc, *dist_grad);
  } else {
    loss.kl = ldl::distribution_loss(pass.probs, target, enc);
  }
  const double reg = pass.regression.output()[0];
  loss.mse = (reg - label) * (reg - label);
  loss.total = weights.kl * loss.kl + weights.mse * loss.mse;
  return loss;
}

}  // namespace

void UltraConfig::validate() const {
  if (n_branches == 0) throw std::invalid_argument("UltraConfig: need at least one branch");
  if (!branch_weights.empty() && branch_weights.size() != n_branches) {
    throw std::invalid_argument("UltraConfig: branch_weights must have one entry per branch");
  }
  for (double w : branch_weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("UltraConfig: non-finite branch weight");
  }
  encoder().validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("UltraConfig: alpha < 0");
  if (n_labels < 2) throw std::invalid_argument("UltraConfig: n_labels must be >= 2");
  if (input_height == 0 || input_width == 0) throw std::invalid_argument("UltraConfig: bad input size");
  if (backbone_hidden.empty()) throw std::invalid_argument("UltraConfig: backbone needs a layer");
  if (head_hidden.size() != 2) {
    throw std::invalid_argument("UltraConfig: branch heads have exactly three layers (two hidden)");
  }
  for (auto d : backbone_hidden) {
    if (d == 0) throw std::invalid_argument("UltraConfig: zero-width backbone layer");
  }
  for (auto d : head_hidden) {
    if (d == 0) throw std::invalid_argument("UltraConfig: zero-width head layer");
  }
  augmentation.validate();
}

std::vector<double> UltraConfig::resolved_weights() const {
  if (branch_weights.empty()) return std::vector<double>(n_branches, 1.0);
  return branch_weights;
}

ldl::EncoderConfig UltraConfig::encoder() const {
  return ldl::EncoderConfig{sigma, epsilon_floor, kl_direction};
}

std::vector<double> fuse(std::span<const BranchFeatures> features, std::span<const double> weights) {
  if (features.empty()) throw std::invalid_argument("fuse: no branches");
  if (features.size() != weights.size()) {
    throw std::invalid_argument("fuse: need one weight per branch");
  }
  const std::size_t dim = features.front().values.size();
  std::vector<double> out(dim, 0.0);
  const double inv_n = 1.0 / static_cast<double>(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (features[k].values.size() != dim) throw std::invalid_argument("fuse: dimension mismatch");
    const double w = weights[k] * inv_n;
    for (std::size_t i = 0; i < dim; ++i) out[i] += w * features[k].values[i];
  }
  return out;
}

void ModelGrads::zero() {
  backbone.zero();
  for (auto& h : heads) h.zero();
  regression.zero();
}

std::vector<std::span<const double>> ModelGrads::views(ParamGroup groups) const {
  std::vector<std::span<const double>> out;
  if (has_group(groups, ParamGroup::Backbone)) {
    for (auto v : backbone.views()) out.push_back(v);
  }
  if (has_group(groups, ParamGroup::Heads)) {
    for (const auto& h : heads) {
      for (auto v : h.views()) out.push_back(v);
    }
  }
  if (has_group(groups, ParamGroup::Regression)) {
    for (auto v : regression.views()) out.push_back(v);
  }
  return out;
}

UltraModel::UltraModel(UltraConfig config) : config_(std::move(config)), grid_(2) {
  config_.validate();
  grid_ = ldl::make_grid(config_.n_labels);
  const std::size_t in = input_dim();
  std::vector<std::size_t> bb_hidden(config_.backbone_hidden.begin(),
                                     config_.backbone_hidden.end() - 1);
  backbone_ = build_mlp(in, bb_hidden, config_.backbone_hidden.back(), nn::Activation::Relu,
                        derive_seed(config_.seed, 0));
  for (std::size_t k = 0; k < config_.n_branches; ++k) {
    heads_.push_back(build_mlp(config_.backbone_hidden.back(), config_.head_hidden,
                               config_.n_labels, nn::Activation::Identity,
                               derive_seed(config_.seed, k + 1)));
  }
  regression_ = build_mlp(config_.n_labels, {}, 1, nn::Activation::Sigmoid,
                          derive_seed(config_.seed, kRegressionStream));
}

void UltraModel::set_norm(const data::NormStats& norm) {
  if (!(norm.std > 0.0) || !std::isfinite(norm.mean)) {
    throw std::invalid_argument("UltraModel: normalization std must be positive");
  }
  norm_ = norm;
}

std::vector<std::span<double>> UltraModel::parameters(ParamGroup groups) {
  std::vector<std::span<double>> out;
  if (has_group(groups, ParamGroup::Backbone)) {
    for (auto v : backbone_.parameters()) out.push_back(v);
  }
  if (has_group(groups, ParamGroup::Heads)) {
    for (auto& h : heads_) {
      for (auto v : h.parameters()) out.push_back(v);
    }
  }
  if (has_group(groups, ParamGroup::Regression)) {
    for (auto v : regression_.parameters()) out.push_back(v);
  }
  return out;
}

std::vector<std::span<const double>> UltraModel::parameters(ParamGroup groups) const {
  std::vector<std::span<const double>> out;
  if (has_group(groups, ParamGroup::Backbone)) {
    for (auto v : backbone_.parameters()) out.push_back(v);
  }
  if (has_group(groups, ParamGroup::Heads)) {
    for (const auto& h : heads_) {
      for (auto v : h.parameters()) out.push_back(v);
    }
  }
  if (has_group(groups, ParamGroup::Regression)) {
    for (auto v : regression_.parameters()) out.push_back(v);
  }
  return out;
}

std::size_t UltraModel::parameter_count() const {
  std::size_t n = backbone_.parameter_count() + regression_.parameter_count();
  for (const auto& h : heads_) n += h.parameter_count();
  return n;
}

ModelGrads UltraModel::make_grads() const {
  ModelGrads g{nn::MlpGrads(backbone_), {}, nn::MlpGrads(regression_)};
  for (const auto& h : heads_) g.heads.emplace_back(h);
  return g;
}

BranchFeatures UltraModel::branch_forward(const data::Patch& patch, std::size_t k,
                                          std::uint64_t aug_seed) const {
  if (k >= config_.n_branches) throw std::invalid_argument("branch_forward: no such branch");
  if (patch.height != config_.input_height || patch.width != config_.input_width) {
    throw std::invalid_argument("branch_forward: patch size does not match model input");
  }
  const data::Patch view = config_.augmentation.is_identity()
                               ? patch
                               : augment(patch, config_.augmentation, aug_seed);
  const std::vector<double> input = data::apply_norm(view, norm_);
  const nn::Tape bb = nn::forward(backbone_, input);
  const nn::Tape head = nn::forward(heads_[k], bb.output());
  return BranchFeatures{std::vector<double>(head.output().begin(), head.output().end())};
}

Prediction UltraModel::predict(const data::Patch& patch, std::uint64_t seed) const {
  std::vector<BranchFeatures> features;
  features.reserve(config_.n_branches);
  for (std::size_t k = 0; k < config_.n_branches; ++k) {
    features.push_back(branch_forward(patch, k, derive_seed(seed, k)));
  }
  const std::vector<double> weights = config_.resolved_weights();
  const std::vector<double> fused = fuse(features, weights);
  Prediction p;
  p.distribution = ldl::softmax(fused);
  p.ldl_score = ldl::decode_argmax(p.distribution, grid_);
  const nn::Tape reg = nn::forward(regression_, fused);
  p.reg_score = reg.output()[0];
  p.final_score = (p.ldl_score + p.reg_score) / 2.0;
  return p;
}

double UltraModel::reported_score(const Prediction& p) const {
  switch (config_.loss_mode) {
    case LossMode::KlOnly: return p.ldl_score;
    case LossMode::MseOnly: return p.reg_score;
    case LossMode::Joint: break;
  }
  return p.final_score;
}

LossWeights loss_weights_for(const UltraConfig& config) {
  switch (config.loss_mode) {
    case LossMode::KlOnly: return {1.0, 0.0, ParamGroup::All};
    case LossMode::MseOnly: return {0.0, 1.0, ParamGroup::All};
    case LossMode::Joint: break;
  }
  return {1.0, config.alpha, ParamGroup::All};
}

SampleLoss sample_loss(const UltraModel& model, const data::Patch& patch, double label,
                       std::uint64_t aug_seed, const LossWeights& weights) {
  const ForwardPass pass = run_forward(model, patch, aug_seed);
  return evaluate_loss(model, pass, label, weights, nullptr);
}

SampleLoss accumulate_sample_gradient(const UltraModel& model, const data::Patch& patch,
                                      double label, std::uint64_t aug_seed,
                                      const LossWeights& weights, double scale, ModelGrads& grads) {
  const ForwardPass pass = run_forward(model, patch, aug_seed);
  std::vector<double> dist_grad;
  SampleLoss loss = evaluate_loss(model, pass, label, weights, &dist_grad);
  if (!std::isfinite(loss.total)) throw NonFiniteError("training loss is not finite");

  std::vector<double> d_fused(model.feature_dim(), 0.0);
  const double kl_scale = weights.kl * scale;
  for (std::size_t i = 0; i < d_fused.size(); ++i) {
    const double g = weights.kl * dist_grad[i];
    loss.dist_grad_sq += g * g;
    d_fused[i] = kl_scale * dist_grad[i];
  }
  const double reg = pass.regression.output()[0];
  const double d_reg = weights.mse * 2.0 * (reg - label) * scale;
  const bool train_reg = has_group(weights.trainable, ParamGroup::Regression);
  const std::vector<double> from_reg =
      nn::backward(model.regression(), pass.regression, std::span(&d_reg, 1),
                   train_reg ? &grads.regression : nullptr);
  for (std::size_t i = 0; i < d_fused.size(); ++i) d_fused[i] += from_reg[i];

  const bool train_heads = has_group(weights.trainable, ParamGroup::Heads);
  const bool train_backbone = has_group(weights.trainable, ParamGroup::Backbone);
  if (!train_heads && !train_backbone) return loss;
  const std::vector<double> w = model.config().resolved_weights();
  const double inv_n = 1.0 / static_cast<double>(model.config().n_branches);
  std::vector<double> d_branch(d_fused.size());
  for (std::size_t k = 0; k < pass.branches.size(); ++k) {
    const double wk = w[k] * inv_n;
    for (std::size_t i = 0; i < d_fused.size(); ++i) d_branch[i] = wk * d_fused[i];
    const std::vector<double> d_bb = nn::backward(model.head(k), pass.branches[k].head, d_branch,
                                                  train_heads ? &grads.heads[k] : nullptr);
    if (train_backbone) {
      nn::backward(model.backbone(), pass.branches[k].backbone, d_bb, &grads.backbone);
    }
  }
  return loss;
}

}  // namespace ultra
