#pragma once

// Dense-stack neural network engine: layers, explicit forward/backward with a
// tape, He initialization, Adam, and a central-difference gradient checker.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ultra::nn {

enum class Activation { Relu, Identity, Sigmoid };

std::string to_string(Activation a);

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // out_dim x in_dim, row-major
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act);

  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
  void validate() const;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const;

  std::span<const DenseLayer> layers() const noexcept { return layers_; }
  /// Mutable access invalidates tapes recorded so far.
  DenseLayer& layer(std::size_t i);

  /// Parameter tensors in enumeration order: W0, b0, W1, b1, ...
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  std::uint64_t revision() const noexcept { return revision_; }

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t revision_ = 0;
};

/// Everything backward needs from one forward pass.
struct Tape {
  const Mlp* owner = nullptr;
  std::uint64_t revision = 0;
  std::vector<std::vector<double>> inputs;       // input to layer l
  std::vector<std::vector<double>> activations;  // output of layer l

  std::span<const double> output() const { return activations.back(); }
};

/// Gradients shaped like an Mlp's parameters.
struct MlpGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  MlpGrads() = default;
  explicit MlpGrads(const Mlp& net);

  void zero();
  void scale(double factor);
  void add(const MlpGrads& other);
  std::vector<std::span<const double>> views() const;
  double squared_norm() const;
};

struct BackwardResult {
  MlpGrads params;
  std::vector<double> input_grad;
};

Mlp init_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations,
             std::uint64_t seed);

Tape forward(const Mlp& net, std::span<const double> input);

/// Reverse pass. Adds parameter gradients into `accum` (skipped when null)
/// and returns the gradient with respect to the network input.
std::vector<double> backward(const Mlp& net, const Tape& tape, std::span<const double> output_grad,
                             MlpGrads* accum);
BackwardResult backward(const Mlp& net, const Tape& tape, std::span<const double> output_grad);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}

  /// Zeroes moments and step count; hyperparameters are kept.
  void reset();
};

/// One bias-corrected Adam update of every tensor in `params` using
/// `state.config.lr`. Moments are allocated on the first call.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state);

/// base_lr * decay^floor(epoch / every).
double lr_schedule(double base_lr, std::size_t epoch, double decay = 0.1, std::size_t every = 100);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // errors are |a - n| / max(|a|, |n|, scale_floor)
  double scale_floor = 1e-4;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t flagged = 0;

  bool passed() const noexcept { return flagged == 0; }
};

double relative_error(double analytic, double numeric, double scale_floor);

/// Compares `analytic` against central differences of `loss` over every entry
/// of `params`. `loss` must read the current parameter values.
GradCheckReport check_gradients(std::span<const std::span<double>> params,
                                std::span<const std::span<const double>> analytic,
                                const std::function<double()>& loss,
                                const GradCheckOptions& options = {});

/// Scalar loss of the network output that also writes d loss / d output.
using OutputLoss = std::function<double(std::span<const double>, std::span<double>)>;

GradCheckReport grad_check(Mlp& net, const OutputLoss& loss_fn, std::span<const double> input,
                           const GradCheckOptions& options = {});

}  // namespace ultra::nn
