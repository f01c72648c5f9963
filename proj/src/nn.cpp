#include "fairmap/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fairmap::nn {

namespace {

Matrix apply_activation(const Matrix& z, Activation act) {
  switch (act) {
    case Activation::Relu:
      return z.cwiseMax(0.0);
    case Activation::Sigmoid:
      return z.unaryExpr([](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      });
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Linear:
      return z;
    case Activation::Softmax: {
      Matrix out(z.rows(), z.cols());
      for (Index r = 0; r < z.rows(); ++r) {
        double m = z.row(r).maxCoeff();
        Eigen::RowVectorXd e = (z.row(r).array() - m).exp();
        out.row(r) = e / e.sum();
      }
      return out;
    }
  }
  return z;
}

// dLoss/dPreactivation from dLoss/dActivation using the cached activation.
Matrix activation_backward(const Matrix& act_out, const Matrix& d_act, Activation act) {
  switch (act) {
    case Activation::Relu:
      return (act_out.array() > 0.0).cast<double>().matrix().cwiseProduct(d_act);
    case Activation::Sigmoid:
      return (act_out.array() * (1.0 - act_out.array()) * d_act.array()).matrix();
    case Activation::Tanh:
      return ((1.0 - act_out.array().square()) * d_act.array()).matrix();
    case Activation::Linear:
      return d_act;
    case Activation::Softmax: {
      Vector row_dot = (d_act.cwiseProduct(act_out)).rowwise().sum();
      return (act_out.array() * (d_act.array().colwise() - row_dot.array())).matrix();
    }
  }
  return d_act;
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
    case Activation::Softmax: return "softmax";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  if (name == "softmax") return Activation::Softmax;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Index DenseNet::param_count() const {
  Index total = 0;
  for (const Layer& l : layers) total += l.weights.size() + l.bias.size();
  return total;
}

DenseNet make_net(Index input_width, const std::vector<LayerSpec>& layers, Rng& rng) {
  DenseNet net;
  net.init_seed = rng.state();
  Index in = input_width;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].activation == Activation::Softmax && i + 1 != layers.size()) {
      throw std::invalid_argument("softmax is only valid as the terminal activation");
    }
    Layer l;
    l.weights.resize(in, layers[i].width);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Index r = 0; r < l.weights.rows(); ++r) {
      for (Index c = 0; c < l.weights.cols(); ++c) {
        l.weights(r, c) = rng.uniform(-bound, bound);
      }
    }
    l.bias = Vector::Zero(layers[i].width);
    l.activation = layers[i].activation;
    net.layers.push_back(std::move(l));
    in = layers[i].width;
  }
  return net;
}

Matrix forward(const DenseNet& net, const Matrix& batch) {
  if (batch.cols() != net.input_width()) {
    throw ShapeMismatch("forward: batch has " + std::to_string(batch.cols()) +
                        " columns, net expects " + std::to_string(net.input_width()));
  }
  Matrix x = batch;
  for (const Layer& l : net.layers) {
    Matrix z = (x * l.weights).rowwise() + l.bias.transpose();
    x = apply_activation(z, l.activation);
  }
  return x;
}

ForwardTrace forward_trace(const DenseNet& net, const Matrix& batch) {
  if (batch.cols() != net.input_width()) {
    throw ShapeMismatch("forward_trace: batch width mismatch");
  }
  ForwardTrace trace;
  trace.input = batch;
  trace.outputs.reserve(net.layers.size());
  Matrix x = batch;
  for (const Layer& l : net.layers) {
    Matrix z = (x * l.weights).rowwise() + l.bias.transpose();
    x = apply_activation(z, l.activation);
    trace.outputs.push_back(x);
  }
  return trace;
}

void GradientBuffer::set_zero() {
  for (Matrix& w : weights) w.setZero();
  for (Vector& b : biases) b.setZero();
}

void GradientBuffer::add_scaled(const GradientBuffer& other, double s) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += s * other.weights[i];
    biases[i] += s * other.biases[i];
  }
}

void GradientBuffer::scale(double s) {
  for (Matrix& w : weights) w *= s;
  for (Vector& b : biases) b *= s;
}

Index GradientBuffer::param_count() const {
  Index total = 0;
  for (const Matrix& w : weights) total += w.size();
  for (const Vector& b : biases) total += b.size();
  return total;
}

double GradientBuffer::max_abs() const {
  double m = 0.0;
  for (const Matrix& w : weights) if (w.size()) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const Vector& b : biases) if (b.size()) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

bool GradientBuffer::all_finite() const {
  for (const Matrix& w : weights) if (!w.allFinite()) return false;
  for (const Vector& b : biases) if (!b.allFinite()) return false;
  return true;
}

GradientBuffer zero_gradients(const DenseNet& net) {
  GradientBuffer g;
  for (const Layer& l : net.layers) {
    g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.biases.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

BackwardResult backward(const DenseNet& net, const ForwardTrace& trace,
                        const Matrix& output_grad) {
  if (trace.empty() || trace.outputs.size() != net.layers.size()) {
    throw NoCachedForward("backward: no forward trace cached for this net");
  }
  if (output_grad.rows() != trace.input.rows() ||
      output_grad.cols() != net.output_width()) {
    throw ShapeMismatch("backward: output gradient shape mismatch");
  }
  BackwardResult res;
  res.grads = zero_gradients(net);
  Matrix d_act = output_grad;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& l = net.layers[li];
    Matrix d_z = activation_backward(trace.outputs[li], d_act, l.activation);
    const Matrix& layer_in = li == 0 ? trace.input : trace.outputs[li - 1];
    res.grads.weights[li] = layer_in.transpose() * d_z;
    res.grads.biases[li] = d_z.colwise().sum();
    d_act = d_z * l.weights.transpose();
  }
  res.input_grad = std::move(d_act);
  return res;
}

OptimizerState make_optimizer(const DenseNet& net, OptimizerState::Kind kind,
                              double learning_rate) {
  OptimizerState opt;
  opt.kind = kind;
  opt.learning_rate = learning_rate;
  opt.first_moment = zero_gradients(net);
  opt.second_moment = zero_gradients(net);
  return opt;
}

void step(DenseNet& net, const GradientBuffer& grads, OptimizerState& opt) {
  if (grads.param_count() != net.param_count()) {
    throw ShapeMismatch("step: gradient shape mismatch");
  }
  ++opt.step_count;
  if (opt.kind == OptimizerState::Kind::Sgd) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      net.layers[i].weights -= opt.learning_rate * grads.weights[i];
      net.layers[i].bias -= opt.learning_rate * grads.biases[i];
    }
    return;
  }
  double bc1 = 1.0 - std::pow(opt.beta1, opt.step_count);
  double bc2 = 1.0 - std::pow(opt.beta2, opt.step_count);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto adam = [&](auto& param, auto& m, auto& v, const auto& g) {
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = (opt.beta2 * v.array() + (1.0 - opt.beta2) * g.array().square()).matrix();
      param.array() -= opt.learning_rate * (m.array() / bc1) /
                       ((v.array() / bc2).sqrt() + opt.epsilon);
    };
    adam(net.layers[i].weights, opt.first_moment.weights[i],
         opt.second_moment.weights[i], grads.weights[i]);
    adam(net.layers[i].bias, opt.first_moment.biases[i],
         opt.second_moment.biases[i], grads.biases[i]);
  }
}

void clip_weights(DenseNet& net, double c) {
  if (c <= 0.0) throw std::invalid_argument("clip_weights: c must be positive");
  for (Layer& l : net.layers) {
    l.weights = l.weights.cwiseMax(-c).cwiseMin(c);
    l.bias = l.bias.cwiseMax(-c).cwiseMin(c);
  }
}

namespace {

double* param_ptr(DenseNet& net, Index flat) {
  for (Layer& l : net.layers) {
    if (flat < l.weights.size()) return l.weights.data() + flat;
    flat -= l.weights.size();
    if (flat < l.bias.size()) return l.bias.data() + flat;
    flat -= l.bias.size();
  }
  return nullptr;
}

double grad_at(const GradientBuffer& g, Index flat) {
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    if (flat < g.weights[i].size()) return g.weights[i].data()[flat];
    flat -= g.weights[i].size();
    if (flat < g.biases[i].size()) return g.biases[i].data()[flat];
    flat -= g.biases[i].size();
  }
  return 0.0;
}

}  // namespace

GradCheckReport grad_check(const DenseNet& net, const LossUnderTest& loss,
                           const Matrix& batch, double fd_step) {
  GradCheckReport report;
  report.loss_name = loss.name;
  GradientBuffer analytic = loss.analytic(net, batch);
  DenseNet probe = net;
  Index n = net.param_count();
  for (Index p = 0; p < n; ++p) {
    double* slot = param_ptr(probe, p);
    double saved = *slot;
    *slot = saved + fd_step;
    double up = loss.value(probe, batch);
    *slot = saved - fd_step;
    double down = loss.value(probe, batch);
    *slot = saved;
    double numeric = (up - down) / (2.0 * fd_step);
    double a = grad_at(analytic, p);
    double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = p;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

namespace {

void write_doubles_le(std::ofstream& out, const double* data, std::size_t count) {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &data[i], 8);
      char buf[8];
      for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(buf, 8);
    }
  }
}

void read_doubles_le(std::ifstream& in, double* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      char buf[8];
      in.read(buf, 8);
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[b])) << (8 * b);
      }
      std::memcpy(&data[i], &bits, 8);
    }
  }
}

}  // namespace

void save_checkpoint(const DenseNet& net, const std::string& json_path) {
  namespace fs = std::filesystem;
  fs::path header_path(json_path);
  fs::path bin_path = header_path;
  bin_path.replace_extension(".bin");

  nlohmann::json header;
  header["version"] = 1;
  header["seed"] = net.init_seed;
  header["input_width"] = net.input_width();
  header["param_file"] = bin_path.filename().string();
  header["param_count"] = net.param_count();
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : net.layers) {
    layers.push_back({{"width", l.weights.cols()},
                      {"activation", activation_name(l.activation)}});
  }
  header["layers"] = layers;

  std::ofstream jout(header_path);
  if (!jout) throw std::runtime_error("cannot write " + json_path);
  jout << header.dump(2) << "\n";

  std::ofstream bout(bin_path, std::ios::binary);
  if (!bout) throw std::runtime_error("cannot write " + bin_path.string());
  for (const Layer& l : net.layers) {
    write_doubles_le(bout, l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    write_doubles_le(bout, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

DenseNet load_checkpoint(const std::string& json_path) {
  namespace fs = std::filesystem;
  std::ifstream jin(json_path);
  if (!jin) throw std::runtime_error("cannot open " + json_path);
  nlohmann::json header = nlohmann::json::parse(jin);
  DenseNet net;
  net.init_seed = header.value("seed", std::uint64_t{0});
  Index in = header.at("input_width").get<Index>();
  for (const auto& lj : header.at("layers")) {
    Layer l;
    Index out = lj.at("width").get<Index>();
    l.weights.resize(in, out);
    l.bias.resize(out);
    l.activation = activation_from_name(lj.at("activation").get<std::string>());
    net.layers.push_back(std::move(l));
    in = out;
  }
  fs::path bin_path = fs::path(json_path).parent_path() /
                      header.at("param_file").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path.string());
  for (Layer& l : net.layers) {
    read_doubles_le(bin, l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    read_doubles_le(bin, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  if (net.param_count() != header.at("param_count").get<Index>()) {
    throw std::runtime_error(json_path + ": parameter count mismatch");
  }
  return net;
}

}  // namespace fairmap::nn
