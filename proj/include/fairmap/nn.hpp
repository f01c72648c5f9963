#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairmap/data.hpp"
#include "fairmap/rng.hpp"

namespace fairmap::nn {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoCachedForward : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { Relu, Sigmoid, Tanh, Linear, Softmax };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
  Matrix weights;  // in x out
  Vector bias;     // out
  Activation activation = Activation::Linear;
};

// Batch-major dense network: rows are samples. Softmax only terminates.
struct DenseNet {
  std::vector<Layer> layers;
  std::uint64_t init_seed = 0;

  Index input_width() const { return layers.empty() ? 0 : layers.front().weights.rows(); }
  Index output_width() const { return layers.empty() ? 0 : layers.back().weights.cols(); }
  Index param_count() const;
};

struct LayerSpec {
  Index width;
  Activation activation;
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
DenseNet make_net(Index input_width, const std::vector<LayerSpec>& layers, Rng& rng);

Matrix forward(const DenseNet& net, const Matrix& batch);

// Per-layer post-activations cached for reverse mode.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> outputs;

  bool empty() const { return outputs.empty(); }
  const Matrix& final() const { return outputs.back(); }
};

ForwardTrace forward_trace(const DenseNet& net, const Matrix& batch);

struct GradientBuffer {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  void set_zero();
  void add_scaled(const GradientBuffer& other, double scale);
  void scale(double s);
  Index param_count() const;
  double max_abs() const;
  bool all_finite() const;
};

GradientBuffer zero_gradients(const DenseNet& net);

struct BackwardResult {
  GradientBuffer grads;
  Matrix input_grad;  // dLoss/dBatch, for chaining through frozen nets
};

// Exact reverse-mode gradients of the scalar loss whose gradient at the
// network output is `output_grad`.
BackwardResult backward(const DenseNet& net, const ForwardTrace& trace,
                        const Matrix& output_grad);

struct OptimizerState {
  enum class Kind { Adam, Sgd };
  Kind kind = Kind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  GradientBuffer first_moment;
  GradientBuffer second_moment;
  long step_count = 0;
};

OptimizerState make_optimizer(const DenseNet& net, OptimizerState::Kind kind,
                              double learning_rate);

void step(DenseNet& net, const GradientBuffer& grads, OptimizerState& opt);

// Clamps every weight and bias to [-c, c].
void clip_weights(DenseNet& net, double c);

// Loss under test: value for finite differences, analytic gradients to check.
struct LossUnderTest {
  std::string name;
  std::function<double(const DenseNet&, const Matrix&)> value;
  std::function<GradientBuffer(const DenseNet&, const Matrix&)> analytic;
};

struct GradCheckReport {
  std::string loss_name;
  double max_rel_error = 0.0;
  Index worst_param = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central finite differences with the given step on every parameter.
GradCheckReport grad_check(const DenseNet& net, const LossUnderTest& loss,
                           const Matrix& batch, double fd_step = 1e-4);

// Checkpoint: JSON header plus a little-endian float64 sidecar; bit-exact.
void save_checkpoint(const DenseNet& net, const std::string& json_path);
DenseNet load_checkpoint(const std::string& json_path);

}  // namespace fairmap::nn
