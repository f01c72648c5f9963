#include <filesystem>

#include "doctest.h"
#include "fairmap/nn.hpp"

using namespace fairmap;
using namespace fairmap::nn;

namespace {

Matrix random_batch(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform();
  }
  return m;
}

// Mean of all outputs; simple smooth scalar loss for gradient checks.
LossUnderTest mean_output_loss() {
  LossUnderTest loss;
  loss.name = "mean_output";
  loss.value = [](const DenseNet& net, const Matrix& batch) {
    return forward(net, batch).mean();
  };
  loss.analytic = [](const DenseNet& net, const Matrix& batch) {
    ForwardTrace trace = forward_trace(net, batch);
    Matrix d = Matrix::Constant(trace.final().rows(), trace.final().cols(),
                                1.0 / static_cast<double>(trace.final().size()));
    return backward(net, trace, d).grads;
  };
  return loss;
}

}  // namespace

TEST_CASE("forward: identity weights reproduce the input") {
  DenseNet net;
  Layer l;
  l.weights = Matrix::Identity(3, 3);
  l.bias = Vector::Zero(3);
  l.activation = Activation::Linear;
  net.layers.push_back(l);
  Matrix x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  CHECK(forward(net, x) == x);
}

TEST_CASE("forward: softmax on zero logits is uniform, rows sum to one") {
  DenseNet net;
  Layer l;
  l.weights = Matrix::Zero(2, 4);
  l.bias = Vector::Zero(4);
  l.activation = Activation::Softmax;
  net.layers.push_back(l);
  Matrix out = forward(net, Matrix::Random(5, 2));
  for (Index r = 0; r < out.rows(); ++r) {
    CHECK(out.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (Index c = 0; c < 4; ++c) CHECK(out(r, c) == doctest::Approx(0.25));
  }
}

TEST_CASE("forward: relu clips negatives") {
  DenseNet net;
  Layer l;
  l.weights = Matrix::Identity(2, 2);
  l.bias = Vector::Zero(2);
  l.activation = Activation::Relu;
  net.layers.push_back(l);
  Matrix x(1, 2);
  x << -1.0, 2.0;
  Matrix out = forward(net, x);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 2.0);
  CHECK_THROWS_AS(forward(net, Matrix::Zero(1, 3)), ShapeMismatch);
}

TEST_CASE("backward: zero output gradient gives zero parameter gradients") {
  Rng rng(3);
  DenseNet net = make_net(4, {{6, Activation::Tanh}, {2, Activation::Linear}}, rng);
  Matrix x = random_batch(5, 4, rng);
  ForwardTrace trace = forward_trace(net, x);
  BackwardResult res = backward(net, trace, Matrix::Zero(5, 2));
  CHECK(res.grads.max_abs() == 0.0);
  CHECK_THROWS_AS(backward(net, ForwardTrace{}, Matrix::Zero(5, 2)), NoCachedForward);
}

TEST_CASE("backward matches central finite differences on a 2-layer net") {
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng(seed);
    DenseNet net = make_net(3, {{5, Activation::Tanh}, {2, Activation::Sigmoid}}, rng);
    Matrix x = random_batch(4, 3, rng);
    GradCheckReport rep = grad_check(net, mean_output_loss(), x);
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("backward is linear in the loss scale") {
  Rng rng(9);
  DenseNet net = make_net(3, {{4, Activation::Relu}, {2, Activation::Linear}}, rng);
  Matrix x = random_batch(6, 3, rng);
  ForwardTrace trace = forward_trace(net, x);
  Matrix d = random_batch(6, 2, rng);
  GradientBuffer g1 = backward(net, trace, d).grads;
  GradientBuffer g3 = backward(net, trace, 3.0 * d).grads;
  for (std::size_t i = 0; i < g1.weights.size(); ++i) {
    CHECK((g3.weights[i] - 3.0 * g1.weights[i]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backward input gradient chains through frozen nets") {
  Rng rng(17);
  DenseNet f = make_net(3, {{4, Activation::Tanh}, {3, Activation::Sigmoid}}, rng);
  DenseNet g = make_net(3, {{4, Activation::Tanh}, {1, Activation::Linear}}, rng);
  Matrix x = random_batch(2, 3, rng);
  // loss = mean(g(f(x))) as a function of f's parameters.
  LossUnderTest loss;
  loss.name = "composed";
  loss.value = [&g](const DenseNet& net, const Matrix& batch) {
    return forward(g, forward(net, batch)).mean();
  };
  loss.analytic = [&g](const DenseNet& net, const Matrix& batch) {
    ForwardTrace tf = forward_trace(net, batch);
    ForwardTrace tg = forward_trace(g, tf.final());
    Matrix d = Matrix::Constant(tg.final().rows(), 1,
                                1.0 / static_cast<double>(tg.final().size()));
    Matrix d_mid = backward(g, tg, d).input_grad;
    return backward(net, tf, d_mid).grads;
  };
  CHECK(grad_check(f, loss, x).max_rel_error <= 1e-4);
}

TEST_CASE("step: sgd and adam updates") {
  DenseNet net;
  Layer l;
  l.weights = Matrix::Zero(1, 1);
  l.bias = Vector::Zero(1);
  l.activation = Activation::Linear;
  net.layers.push_back(l);

  GradientBuffer g = zero_gradients(net);
  g.weights[0](0, 0) = 1.0;

  SUBCASE("sgd moves by -lr * grad") {
    OptimizerState opt = make_optimizer(net, OptimizerState::Kind::Sgd, 0.1);
    step(net, g, opt);
    CHECK(net.layers[0].weights(0, 0) == doctest::Approx(-0.1));
    GradientBuffer zero = zero_gradients(net);
    step(net, zero, opt);
    CHECK(net.layers[0].weights(0, 0) == doctest::Approx(-0.1));
  }

  SUBCASE("adam first step matches the bias-corrected recurrence") {
    double lr = 0.01;
    OptimizerState opt = make_optimizer(net, OptimizerState::Kind::Adam, lr);
    double grad = 0.37;
    g.weights[0](0, 0) = grad;
    step(net, g, opt);
    // Hand-computed: m_hat = g, v_hat = g^2 -> delta = -lr * g / (|g| + eps).
    double expected = -lr * grad / (std::abs(grad) + opt.epsilon);
    CHECK(net.layers[0].weights(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(net.layers[0].weights(0, 0)) < lr);
    CHECK(std::abs(net.layers[0].weights(0, 0)) > lr * (1.0 - 1e-6));
    CHECK(opt.step_count == 1);
  }
}

TEST_CASE("clip_weights clamps every parameter and is idempotent") {
  Rng rng(5);
  DenseNet net = make_net(3, {{4, Activation::Relu}, {2, Activation::Linear}}, rng);
  net.layers[0].weights(0, 0) = -2.0;
  net.layers[0].weights(1, 1) = 0.005;
  net.layers[1].weights(0, 0) = 2.0;
  clip_weights(net, 0.01);
  CHECK(net.layers[0].weights(0, 0) == -0.01);
  CHECK(net.layers[0].weights(1, 1) == 0.005);
  CHECK(net.layers[1].weights(0, 0) == 0.01);
  DenseNet once = net;
  clip_weights(net, 0.01);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(net.layers[i].weights == once.layers[i].weights);
    CHECK(net.layers[i].bias == once.layers[i].bias);
  }
  double max_abs = 0.0;
  for (const Layer& l : net.layers) {
    max_abs = std::max(max_abs, l.weights.cwiseAbs().maxCoeff());
  }
  CHECK(max_abs <= 0.01);
}

TEST_CASE("make_net is deterministic and respects the init bound") {
  Rng a(11), b(11);
  DenseNet na = make_net(4, {{8, Activation::Relu}, {2, Activation::Softmax}}, a);
  DenseNet nb = make_net(4, {{8, Activation::Relu}, {2, Activation::Softmax}}, b);
  CHECK(na.layers[0].weights == nb.layers[0].weights);
  CHECK(na.layers[1].weights == nb.layers[1].weights);
  CHECK(na.layers[0].weights.cwiseAbs().maxCoeff() <= 0.5);  // 1/sqrt(4)
  CHECK(na.param_count() == 4 * 8 + 8 + 8 * 2 + 2);
  CHECK_THROWS(make_net(4, {{3, Activation::Softmax}, {2, Activation::Linear}}, a));
}

TEST_CASE("forward is deterministic") {
  Rng rng(21);
  DenseNet net = make_net(5, {{7, Activation::Sigmoid}, {3, Activation::Softmax}}, rng);
  Matrix x = random_batch(6, 5, rng);
  CHECK(forward(net, x) == forward(net, x));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(33);
  DenseNet net = make_net(3, {{5, Activation::Tanh}, {4, Activation::Softmax}}, rng);
  std::string path =
      (std::filesystem::temp_directory_path() / "fairmap_ckpt.json").string();
  save_checkpoint(net, path);
  DenseNet back = load_checkpoint(path);
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(back.layers[i].weights == net.layers[i].weights);  // exact
    CHECK(back.layers[i].bias == net.layers[i].bias);
    CHECK(back.layers[i].activation == net.layers[i].activation);
  }
  CHECK(back.init_seed == net.init_seed);
}
