#include "latf/nn.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace latf;
using namespace latf::nn;

namespace {

DenseNet random_net(std::vector<int> widths, Activation hidden, std::mt19937_64& rng) {
  DenseNet net(widths, hidden, Activation::identity);
  net.init_fan_in(rng);
  for (auto& l : net.layers()) l.bias = testing::random_matrix(l.bias.size(), 1, rng, 0.3);
  return net;
}

}  // namespace

TEST_CASE("dense net starts at zero and reports its shape") {
  DenseNet net({3, 5, 2}, Activation::tanh, Activation::identity);
  CHECK(net.input_dim() == 3);
  CHECK(net.output_dim() == 2);
  CHECK(net.parameter_count() == 3 * 5 + 5 + 5 * 2 + 2);
  CHECK(net.forward(Eigen::VectorXd::Ones(3)).norm() == 0.0);
  CHECK(net.widths() == std::vector<int>{3, 5, 2});
}

TEST_CASE("fan-in initialisation bounds") {
  std::mt19937_64 rng(1);
  DenseNet net({16, 64, 4}, Activation::relu, Activation::identity);
  net.init_fan_in(rng);
  CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(net.layers()[1].weight.cwiseAbs().maxCoeff() <= 0.125);
  CHECK(net.layers()[0].bias.norm() == 0.0);
  net.zero_last_layer();
  CHECK(net.forward(Eigen::VectorXd::Ones(16)).norm() == 0.0);
}

TEST_CASE("batched forward equals per-sample forward") {
  std::mt19937_64 rng(2);
  const DenseNet net = random_net({3, 8, 8, 2}, Activation::relu, rng);
  const Eigen::MatrixXd x = testing::random_matrix(3, 10, rng);
  const Eigen::MatrixXd y = net.forward_batch(x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) CHECK((y.col(j) - net.forward(x.col(j))).norm() < 1e-14);
  CHECK_THROWS_AS(net.forward_batch(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("reverse pass matches finite differences") {
  for (Activation act : {Activation::tanh, Activation::relu, Activation::identity}) {
    std::mt19937_64 rng(3);
    DenseNet net = random_net({3, 7, 5, 2}, act, rng);
    Eigen::MatrixXd x = testing::random_matrix(3, 6, rng);
    const Eigen::MatrixXd w = testing::random_matrix(2, 6, rng);
    auto loss = [&] { return (net.forward_batch(x).array() * w.array()).sum(); };
    Tape tape;
    net.forward_batch(x, &tape);
    DenseNet grads = net;
    grads.set_zero();
    const Eigen::MatrixXd dx = net.backward(tape, w, grads);
    CHECK(testing::max_relative_error(net.parameter_blocks(), grads.parameter_blocks(), loss) < 1e-6);
    std::vector<std::span<double>> xb{std::span<double>(x.data(), static_cast<std::size_t>(x.size()))};
    Eigen::MatrixXd dxc = dx;
    std::vector<std::span<double>> gb{std::span<double>(dxc.data(), static_cast<std::size_t>(dxc.size()))};
    CHECK(testing::max_relative_error(xb, gb, loss) < 1e-6);
  }
}

TEST_CASE("reverse pass accumulates and needs a recorded forward pass") {
  std::mt19937_64 rng(4);
  const DenseNet net = random_net({2, 4, 1}, Activation::tanh, rng);
  const Eigen::MatrixXd x = testing::random_matrix(2, 3, rng);
  Tape tape;
  net.forward_batch(x, &tape);
  DenseNet g1 = net, g2 = net;
  g1.set_zero();
  g2.set_zero();
  const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(1, 3);
  net.backward(tape, up, g1);
  net.backward(tape, up, g2);
  net.backward(tape, up, g2);
  auto a = g1.parameter_blocks();
  auto b = g2.parameter_blocks();
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) CHECK(b[k][i] == doctest::Approx(2 * a[k][i]));
  }
  CHECK_THROWS_AS(net.backward(Tape{}, up, g1), std::logic_error);
}

TEST_CASE("activation names round-trip") {
  for (Activation a : {Activation::identity, Activation::tanh, Activation::relu}) {
    CHECK(activation_from_string(to_string(a)) == a);
  }
  CHECK_THROWS(activation_from_string("sigmoid"));
}

TEST_CASE("adam follows the textbook recurrence") {
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g(2);
  Adam adam(cfg, {2});
  double ref[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 25; ++t) {
    for (int i = 0; i < 2; ++i) g[i] = std::sin(0.3 * t + i) + 0.5 * ref[i];
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    }
    const StepReport r = adam.step({std::span<double>(p)}, {std::span<double>(g)});
    CHECK(r.applied);
    CHECK(p[0] == doctest::Approx(ref[0]).epsilon(1e-13));
    CHECK(p[1] == doctest::Approx(ref[1]).epsilon(1e-13));
  }
  CHECK(adam.step_count() == 25);
}

TEST_CASE("adam rejects a non-finite gradient without touching state") {
  Adam adam(AdamConfig{}, {3, 1});
  std::vector<double> a{1, 2, 3}, b{4};
  std::vector<double> ga{0.1, 0.2, 0.3}, gb{std::numeric_limits<double>::quiet_NaN()};
  const StepReport r = adam.step({std::span<double>(a), std::span<double>(b)}, {std::span<double>(ga), std::span<double>(gb)});
  CHECK_FALSE(r.applied);
  CHECK(r.diagnostics.find("block 1") != std::string::npos);
  CHECK(a == std::vector<double>{1, 2, 3});
  CHECK(b[0] == 4);
  CHECK(adam.step_count() == 0);
}
