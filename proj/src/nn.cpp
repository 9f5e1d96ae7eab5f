#include "ultra/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ultra/error.hpp"
#include "ultra/rng.hpp"
#include "ultra/simd/kernels.hpp"

namespace ultra::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act)
    : in_dim(in), out_dim(out), weights(in * out, 0.0), bias(out, 0.0), activation(act) {
  if (in == 0 || out == 0) throw std::invalid_argument("DenseLayer: zero dimension");
}

void DenseLayer::validate() const {
  if (in_dim == 0 || out_dim == 0 || weights.size() != in_dim * out_dim ||
      bias.size() != out_dim) {
    throw std::invalid_argument("DenseLayer: inconsistent dimensions");
  }
  for (double w : weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("DenseLayer: non-finite weight");
  }
  for (double b : bias) {
    if (!std::isfinite(b)) throw std::invalid_argument("DenseLayer: non-finite bias");
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("Mlp: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].validate();
    if (l > 0 && layers_[l].in_dim != layers_[l - 1].out_dim) {
      throw std::invalid_argument("Mlp: layer " + std::to_string(l) +
                                  " input does not match previous output");
    }
  }
}

std::size_t Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim; }
std::size_t Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim; }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

DenseLayer& Mlp::layer(std::size_t i) {
  ++revision_;
  return layers_.at(i);
}

std::vector<std::span<double>> Mlp::parameters() {
  ++revision_;
  std::vector<std::span<double>> out;
  out.reserve(2 * layers_.size());
  for (auto& l : layers_) {
    out.emplace_back(l.weights);
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> Mlp::parameters() const {
  std::vector<std::span<const double>> out;
  out.reserve(2 * layers_.size());
  for (const auto& l : layers_) {
    out.emplace_back(l.weights);
    out.emplace_back(l.bias);
  }
  return out;
}

MlpGrads::MlpGrads(const Mlp& net) {
  for (const auto& l : net.layers()) {
    weights.emplace_back(l.weights.size(), 0.0);
    bias.emplace_back(l.bias.size(), 0.0);
  }
}

void MlpGrads::zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

void MlpGrads::scale(double factor) {
  for (auto& w : weights) {
    for (double& x : w) x *= factor;
  }
  for (auto& b : bias) {
    for (double& x : b) x *= factor;
  }
}

void MlpGrads::add(const MlpGrads& other) {
  if (other.weights.size() != weights.size()) throw std::invalid_argument("MlpGrads: shape");
  const auto& k = simd::active_kernels();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (other.weights[l].size() != weights[l].size() || other.bias[l].size() != bias[l].size()) {
      throw std::invalid_argument("MlpGrads: shape");
    }
    k.axpy(1.0, other.weights[l].data(), weights[l].data(), weights[l].size());
    k.axpy(1.0, other.bias[l].data(), bias[l].data(), bias[l].size());
  }
}

std::vector<std::span<const double>> MlpGrads::views() const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(weights[l]);
    out.emplace_back(bias[l]);
  }
  return out;
}

double MlpGrads::squared_norm() const {
  double acc = 0.0;
  for (const auto& t : views()) {
    for (double x : t) acc += x * x;
  }
  return acc;
}

Mlp init_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations,
             std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("init_mlp: need at least two layer sizes");
  if (activations.size() != dims.size() - 1) {
    throw std::invalid_argument("init_mlp: need one activation per layer");
  }
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer(dims[l], dims[l + 1], activations[l]);
    const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
    for (double& w : layer.weights) w = scale * rng.normal();
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

Tape forward(const Mlp& net, std::span<const double> input) {
  if (net.depth() == 0) throw std::invalid_argument("forward: empty network");
  if (input.size() != net.in_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.size()) +
                                " entries, network expects " + std::to_string(net.in_dim()));
  }
  const auto& k = simd::active_kernels();
  Tape tape;
  tape.owner = &net;
  tape.revision = net.revision();
  tape.inputs.reserve(net.depth());
  tape.activations.reserve(net.depth());
  std::span<const double> x = input;
  for (const auto& layer : net.layers()) {
    tape.inputs.emplace_back(x.begin(), x.end());
    std::vector<double> y(layer.out_dim);
    k.gemv(layer.weights.data(), x.data(), layer.bias.data(), y.data(), layer.out_dim,
           layer.in_dim);
    switch (layer.activation) {
      case Activation::Relu:
        for (double& v : y) v = v > 0.0 ? v : 0.0;
        break;
      case Activation::Sigmoid:
        for (double& v : y) v = 1.0 / (1.0 + std::exp(-v));
        break;
      case Activation::Identity:
        break;
    }
    tape.activations.push_back(std::move(y));
    x = tape.activations.back();
  }
  return tape;
}

std::vector<double> backward(const Mlp& net, const Tape& tape, std::span<const double> output_grad,
                             MlpGrads* accum) {
  if (tape.owner != &net || tape.revision != net.revision() ||
      tape.activations.size() != net.depth()) {
    throw std::invalid_argument("backward: tape does not belong to this network state");
  }
  if (output_grad.size() != net.out_dim()) {
    throw std::invalid_argument("backward: output gradient has wrong length");
  }
  if (accum && accum->weights.size() != net.depth()) {
    throw std::invalid_argument("backward: gradient buffer shape mismatch");
  }
  const auto& k = simd::active_kernels();
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (std::size_t li = net.depth(); li-- > 0;) {
    const DenseLayer& layer = net.layers()[li];
    const auto& out = tape.activations[li];
    switch (layer.activation) {
      case Activation::Relu:
        for (std::size_t i = 0; i < delta.size(); ++i) {
          if (!(out[i] > 0.0)) delta[i] = 0.0;
        }
        break;
      case Activation::Sigmoid:
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= out[i] * (1.0 - out[i]);
        break;
      case Activation::Identity:
        break;
    }
    const auto& in = tape.inputs[li];
    if (accum) {
      k.ger_acc(delta.data(), in.data(), accum->weights[li].data(), layer.out_dim, layer.in_dim);
      k.axpy(1.0, delta.data(), accum->bias[li].data(), layer.out_dim);
    }
    std::vector<double> prev(layer.in_dim, 0.0);
    k.gemv_t_acc(layer.weights.data(), delta.data(), prev.data(), layer.out_dim, layer.in_dim);
    delta = std::move(prev);
  }
  return delta;
}

BackwardResult backward(const Mlp& net, const Tape& tape, std::span<const double> output_grad) {
  BackwardResult r{MlpGrads(net), {}};
  r.input_grad = backward(net, tape, output_grad, &r.params);
  return r;
}

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("Adam: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("Adam: beta1 not in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("Adam: beta2 not in [0,1)");
  if (!(eps > 0.0)) throw std::invalid_argument("Adam: eps must be positive");
}

void AdamState::reset() {
  t = 0;
  m.clear();
  v.clear();
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state) {
  state.config.validate();
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: tensor count mismatch");
  if (state.m.empty() && state.t == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size() ||
        state.v[i].size() != params[i].size()) {
      throw std::invalid_argument("adam_step: shape mismatch in tensor " + std::to_string(i));
    }
  }
  ++state.t;
  const auto t = static_cast<double>(state.t);
  const simd::AdamCoefficients c{state.config.lr,
                                 state.config.beta1,
                                 state.config.beta2,
                                 state.config.eps,
                                 1.0 - std::pow(state.config.beta1, t),
                                 1.0 - std::pow(state.config.beta2, t)};
  const auto& k = simd::active_kernels();
  for (std::size_t i = 0; i < params.size(); ++i) {
    k.adam_update(params[i].data(), grads[i].data(), state.m[i].data(), state.v[i].data(),
                  params[i].size(), c);
  }
}

double lr_schedule(double base_lr, std::size_t epoch, double decay, std::size_t every) {
  if (every == 0) return base_lr;
  return base_lr * std::pow(decay, static_cast<double>(epoch / every));
}

double relative_error(double analytic, double numeric, double scale_floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), scale_floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport check_gradients(std::span<const std::span<double>> params,
                                std::span<const std::span<const double>> analytic,
                                const std::function<double()>& loss,
                                const GradCheckOptions& options) {
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("check_gradients: tensor count mismatch");
  }
  GradCheckReport report;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    if (params[ti].size() != analytic[ti].size()) {
      throw std::invalid_argument("check_gradients: shape mismatch");
    }
    for (std::size_t i = 0; i < params[ti].size(); ++i) {
      double& theta = params[ti][i];
      const double orig = theta;
      theta = orig + options.step;
      const double up = loss();
      theta = orig - options.step;
      const double down = loss();
      theta = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NonFiniteError("check_gradients: non-finite loss");
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(analytic[ti][i], numeric, options.scale_floor);
      ++report.checked;
      if (err > options.tolerance) ++report.flagged;
      if (err > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = err;
        report.worst_tensor = ti;
        report.worst_index = i;
        report.worst_analytic = analytic[ti][i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport grad_check(Mlp& net, const OutputLoss& loss_fn, std::span<const double> input,
                           const GradCheckOptions& options) {
  std::vector<double> out_grad(net.out_dim());
  const Tape tape = forward(net, input);
  const double base = loss_fn(tape.output(), out_grad);
  if (!std::isfinite(base)) throw NonFiniteError("grad_check: non-finite loss");
  const BackwardResult grads = backward(net, tape, out_grad);
  const auto analytic = grads.params.views();
  std::vector<double> scratch(net.out_dim());
  auto params = net.parameters();
  return check_gradients(
      params, analytic,
      [&] {
        const Tape t = forward(net, input);
        return loss_fn(t.output(), scratch);
      },
      options);
}

}  // namespace ultra::nn
