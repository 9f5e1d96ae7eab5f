#pragma once

// Gaussian label-distribution codec over a discretized [0, 1] score axis:
// grid construction, encoding of scalar scores, softmax, KL/joint losses and
// the decoders that map a distribution back to a scalar.

#include <cstddef>
#include <span>
#include <vector>

namespace ultra::ldl {

/// Endpoint-inclusive uniform grid t_i = i / (n - 1), i = 0..n-1.
class ScoreGrid {
 public:
  explicit ScoreGrid(std::size_t n);

  std::size_t size() const noexcept { return values_.size(); }
  double spacing() const noexcept { return 1.0 / static_cast<double>(values_.size() - 1); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

ScoreGrid make_grid(std::size_t n);

enum class KlDirection {
  PredToTarget,  // KL(p || y) = sum p log(p / y), the default
  TargetToPred,  // KL(y || p) = sum y log(y / p)
};

struct EncoderConfig {
  double sigma = 0.04;
  double epsilon_floor = 1e-12;
  KlDirection direction = KlDirection::PredToTarget;

  void validate() const;
};

/// Probability vector aligned index-for-index with a ScoreGrid.
using LabelDistribution = std::vector<double>;

/// Normal density N(t; s, sigma^2).
double gaussian_kernel(double t, double s, double sigma);

/// Normalized Gaussian over the grid centered on score `s`.
LabelDistribution encode(double s, const ScoreGrid& grid, const EncoderConfig& cfg);

/// Grid value of the most probable label; ties resolve to the lowest index.
double decode_argmax(std::span<const double> dist, const ScoreGrid& grid);
std::size_t argmax_index(std::span<const double> dist);

/// sum_i p_i t_i clamped to [0, 1].
double decode_expectation(std::span<const double> dist, const ScoreGrid& grid);

LabelDistribution softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

/// KL(p || y) with y floored at cfg.epsilon_floor and 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> y,
                     const EncoderConfig& cfg);

/// Distribution-matching loss in the direction selected by cfg.direction.
double distribution_loss(std::span<const double> p, std::span<const double> y,
                         const EncoderConfig& cfg);

/// d KL(softmax(z) || y) / dz_j = p_j (log(p_j / y_j) - KL).
std::vector<double> kl_softmax_grad(std::span<const double> logits,
                                    std::span<const double> y, const EncoderConfig& cfg);

/// Gradient of distribution_loss(softmax(z), y) with respect to z, written
/// into `grad`. `p` must already hold softmax(z). Returns the loss value.
double distribution_loss_grad(std::span<const double> p, std::span<const double> y,
                              const EncoderConfig& cfg, std::span<double> grad);

double mse_loss(double pred, double target);
double mse_loss(std::span<const double> pred, std::span<const double> target);

/// kl_divergence(p, y) + alpha * mse_loss(pred, target).
double joint_loss(std::span<const double> p, std::span<const double> y, double pred,
                  double target, double alpha, const EncoderConfig& cfg);

}  // namespace ultra::ldl
