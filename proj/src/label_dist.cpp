#include "ultra/label_dist.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ultra::ldl {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

void require_score(double s, const char* what) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw std::invalid_argument(std::string(what) + ": score " + std::to_string(s) +
                                " outside [0, 1]");
  }
}

}  // namespace

ScoreGrid::ScoreGrid(std::size_t n) {
  if (n < 2) throw std::invalid_argument("ScoreGrid: need at least 2 labels");
  values_.resize(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) values_[i] = static_cast<double>(i) / denom;
  // i / (n-1) is exact at both ends already
}

ScoreGrid make_grid(std::size_t n) { return ScoreGrid(n); }

void EncoderConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("EncoderConfig: sigma must be positive");
  }
  if (!(epsilon_floor > 0.0 && epsilon_floor <= 1e-6)) {
    throw std::invalid_argument("EncoderConfig: epsilon_floor must be in (0, 1e-6]");
  }
}

double gaussian_kernel(double t, double s, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const double z = (t - s) / sigma;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

LabelDistribution encode(double s, const ScoreGrid& grid, const EncoderConfig& cfg) {
  cfg.validate();
  require_score(s, "encode");
  LabelDistribution y(grid.size());
  double total = 0.0;
  // offsets are taken in index units so that scores midway between grid
  // points give bit-identical neighbours
  const double last = static_cast<double>(grid.size() - 1);
  const double center = s * last;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double z = (static_cast<double>(i) - center) / (last * cfg.sigma);
    y[i] = std::exp(-0.5 * z * z);
    total += y[i];
  }
  // the grid always contains a point within spacing/2 of s, so total > 0 unless
  // sigma is tiny enough to underflow every term
  if (!(total > 0.0)) {
    y.assign(grid.size(), 0.0);
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (std::abs(grid[i] - s) < std::abs(grid[best] - s)) best = i;
    }
    y[best] = 1.0;
    return y;
  }
  for (double& v : y) v /= total;
  double resum = 0.0;
  for (double v : y) resum += v;
  for (double& v : y) v /= resum;
  return y;
}

std::size_t argmax_index(std::span<const double> dist) {
  if (dist.empty()) throw std::invalid_argument("argmax_index: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = i;
  }
  return best;
}

double decode_argmax(std::span<const double> dist, const ScoreGrid& grid) {
  require_same_length(dist.size(), grid.size(), "decode_argmax");
  return grid[argmax_index(dist)];
}

double decode_expectation(std::span<const double> dist, const ScoreGrid& grid) {
  require_same_length(dist.size(), grid.size(), "decode_expectation");
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) acc += dist[i] * grid[i];
  return std::clamp(acc, 0.0, 1.0);
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  require_same_length(logits.size(), out.size(), "softmax");
  double top = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax: non-finite logit");
    top = std::max(top, z);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
}

LabelDistribution softmax(std::span<const double> logits) {
  LabelDistribution p(logits.size());
  softmax_into(logits, p);
  return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> y,
                     const EncoderConfig& cfg) {
  require_same_length(p.size(), y.size(), "kl_divergence");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i] * std::log(p[i] / std::max(y[i], cfg.epsilon_floor));
  }
  return std::max(acc, 0.0);
}

double distribution_loss(std::span<const double> p, std::span<const double> y,
                         const EncoderConfig& cfg) {
  if (cfg.direction == KlDirection::PredToTarget) return kl_divergence(p, y, cfg);
  require_same_length(p.size(), y.size(), "distribution_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] <= 0.0) continue;
    acc += y[i] * std::log(y[i] / std::max(p[i], cfg.epsilon_floor));
  }
  return std::max(acc, 0.0);
}

double distribution_loss_grad(std::span<const double> p, std::span<const double> y,
                              const EncoderConfig& cfg, std::span<double> grad) {
  require_same_length(p.size(), y.size(), "distribution_loss_grad");
  require_same_length(p.size(), grad.size(), "distribution_loss_grad");
  if (cfg.direction == KlDirection::TargetToPred) {
    // d/dz sum y log(y/p) = p - y when sum y = 1
    for (std::size_t j = 0; j < p.size(); ++j) grad[j] = p[j] - y[j];
    return distribution_loss(p, y, cfg);
  }
  double loss = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    grad[j] = p[j] > 0.0 ? std::log(p[j] / std::max(y[j], cfg.epsilon_floor)) : 0.0;
    loss += p[j] * grad[j];
  }
  for (std::size_t j = 0; j < p.size(); ++j) grad[j] = p[j] * (grad[j] - loss);
  return std::max(loss, 0.0);
}

std::vector<double> kl_softmax_grad(std::span<const double> logits,
                                    std::span<const double> y, const EncoderConfig& cfg) {
  require_same_length(logits.size(), y.size(), "kl_softmax_grad");
  const LabelDistribution p = softmax(logits);
  EncoderConfig literal = cfg;
  literal.direction = KlDirection::PredToTarget;
  std::vector<double> g(p.size());
  distribution_loss_grad(p, y, literal, g);
  return g;
}

double mse_loss(double pred, double target) {
  require_score(pred, "mse_loss");
  require_score(target, "mse_loss");
  const double d = pred - target;
  return d * d;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  require_same_length(pred.size(), target.size(), "mse_loss");
  if (pred.empty()) throw std::invalid_argument("mse_loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += mse_loss(pred[i], target[i]);
  return acc / static_cast<double>(pred.size());
}

double joint_loss(std::span<const double> p, std::span<const double> y, double pred,
                  double target, double alpha, const EncoderConfig& cfg) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("joint_loss: alpha must be >= 0");
  return kl_divergence(p, y, cfg) + alpha * mse_loss(pred, target);
}

}  // namespace ultra::ldl
