#include <cmath>
#include <vector>

#include "carsm/mlp.hpp"
#include "carsm/rng.hpp"
#include "doctest.h"

using namespace carsm::approx;

namespace {

// Straightforward per-element forward pass used as an oracle.
Eigen::MatrixXd naive_forward(const Mlp& net, const Eigen::MatrixXd& input) {
  Eigen::MatrixXd x = input;
  const int n_layers = static_cast<int>(net.weights.size());
  for (int l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd y(net.weights[l].rows(), x.cols());
    for (int col = 0; col < x.cols(); ++col)
      for (int r = 0; r < net.weights[l].rows(); ++r) {
        double acc = net.biases[l](r);
        for (int c = 0; c < net.weights[l].cols(); ++c)
          acc += net.weights[l](r, c) * x(c, col);
        y(r, col) = l + 1 < n_layers ? std::tanh(acc) : acc;
      }
    x = y;
  }
  return x;
}

double loss_at(const Mlp& net, const Eigen::MatrixXd& input,
               const Eigen::MatrixXd& coeff) {
  return (coeff.array() * mlp_forward(net, input).array()).sum();
}

}  // namespace

TEST_CASE("param_count for the default policy shape") {
  const Mlp net = mlp_init({4, 64, 64, 2}, 1);
  CHECK(param_count(net) == 4610);  // 320 + 4160 + 130
}

TEST_CASE("init is deterministic, bounded, and zero-biased") {
  const Mlp a = mlp_init({3, 8, 2}, 5);
  const Mlp b = mlp_init({3, 8, 2}, 5);
  const Mlp c = mlp_init({3, 8, 2}, 6);
  CHECK(flatten(a) == flatten(b));
  CHECK(flatten(a) != flatten(c));
  for (size_t l = 0; l < a.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(a.sizes[l]));
    CHECK(a.weights[l].array().abs().maxCoeff() <= bound);
    CHECK(a.biases[l].array().abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("flatten and unflatten are exact inverses") {
  Mlp net = mlp_init({5, 7, 3}, 9);
  const Eigen::VectorXd params = flatten(net);
  REQUIRE(params.size() == param_count(net));
  Mlp other = mlp_init({5, 7, 3}, 10);
  unflatten(other, params);
  CHECK(flatten(other) == params);
  CHECK(other.weights[0] == net.weights[0]);
  CHECK(other.biases[1] == net.biases[1]);
}

TEST_CASE("forward matches a naive per-element implementation") {
  carsm::Rng rng(3);
  const Mlp net = mlp_init({3, 5, 4, 2}, 21);
  Eigen::MatrixXd input(3, 4);
  for (int i = 0; i < input.size(); ++i)
    input.data()[i] = rng.normal();
  const Eigen::MatrixXd got = mlp_forward(net, input);
  const Eigen::MatrixXd want = naive_forward(net, input);
  CHECK((got - want).array().abs().maxCoeff() < 1e-12);

  const Eigen::VectorXd single = mlp_forward(net, Eigen::VectorXd(input.col(1)));
  CHECK((single - got.col(1)).array().abs().maxCoeff() < 1e-12);

  const ForwardTrace trace = mlp_forward_trace(net, input);
  CHECK(trace.output() == got);
  REQUIRE(trace.layers.size() == 4);
  CHECK(trace.layers[0] == input);
}

TEST_CASE("backward matches central finite differences") {
  carsm::Rng rng(31);
  Mlp net = mlp_init({4, 6, 3}, 8);
  Eigen::MatrixXd input(4, 3), coeff(3, 3);
  for (int i = 0; i < input.size(); ++i) input.data()[i] = rng.normal();
  for (int i = 0; i < coeff.size(); ++i) coeff.data()[i] = rng.normal();

  const ForwardTrace trace = mlp_forward_trace(net, input);
  const BackwardResult back = mlp_backward(net, trace, coeff);
  REQUIRE(back.param_grad.size() == param_count(net));
  REQUIRE(back.input_grad.rows() == 4);
  REQUIRE(back.input_grad.cols() == 3);

  const double eps = 1e-6;
  Eigen::VectorXd params = flatten(net);
  for (int trial = 0; trial < 25; ++trial) {
    const int i = rng.uniform_int(static_cast<int>(params.size()));
    Eigen::VectorXd p = params;
    p(i) += eps;
    unflatten(net, p);
    const double up = loss_at(net, input, coeff);
    p(i) -= 2 * eps;
    unflatten(net, p);
    const double down = loss_at(net, input, coeff);
    const double fd = (up - down) / (2 * eps);
    CHECK(back.param_grad(i) ==
          doctest::Approx(fd).epsilon(1e-5).scale(std::max(1.0, std::abs(fd))));
  }
  unflatten(net, params);

  for (int trial = 0; trial < 10; ++trial) {
    const int r = rng.uniform_int(4), c = rng.uniform_int(3);
    Eigen::MatrixXd in = input;
    in(r, c) += eps;
    const double up = loss_at(net, in, coeff);
    in(r, c) -= 2 * eps;
    const double down = loss_at(net, in, coeff);
    const double fd = (up - down) / (2 * eps);
    CHECK(back.input_grad(r, c) ==
          doctest::Approx(fd).epsilon(1e-5).scale(std::max(1.0, std::abs(fd))));
  }
}

TEST_CASE("jvp matches directional finite differences") {
  carsm::Rng rng(77);
  Mlp net = mlp_init({3, 6, 2}, 15);
  Eigen::MatrixXd input(3, 2);
  for (int i = 0; i < input.size(); ++i) input.data()[i] = rng.normal();
  Eigen::VectorXd tangent(param_count(net));
  for (int i = 0; i < tangent.size(); ++i) tangent(i) = rng.normal();

  const ForwardTrace trace = mlp_forward_trace(net, input);
  const Eigen::MatrixXd jvp = mlp_jvp(net, trace, tangent);

  const double eps = 1e-6;
  const Eigen::VectorXd params = flatten(net);
  unflatten(net, params + eps * tangent);
  const Eigen::MatrixXd up = mlp_forward(net, input);
  unflatten(net, params - eps * tangent);
  const Eigen::MatrixXd down = mlp_forward(net, input);
  unflatten(net, params);
  const Eigen::MatrixXd fd = (up - down) / (2 * eps);
  CHECK((jvp - fd).array().abs().maxCoeff() < 1e-6);
}

TEST_CASE("jvp is consistent with backward (forward/reverse agreement)") {
  carsm::Rng rng(91);
  const Mlp net = mlp_init({4, 5, 3}, 33);
  Eigen::MatrixXd input(4, 3), coeff(3, 3);
  for (int i = 0; i < input.size(); ++i) input.data()[i] = rng.normal();
  for (int i = 0; i < coeff.size(); ++i) coeff.data()[i] = rng.normal();
  Eigen::VectorXd tangent(param_count(net));
  for (int i = 0; i < tangent.size(); ++i) tangent(i) = rng.normal();

  const ForwardTrace trace = mlp_forward_trace(net, input);
  // coeff . J t  ==  (J^T coeff) . t
  const double lhs =
      (coeff.array() * mlp_jvp(net, trace, tangent).array()).sum();
  const double rhs = mlp_backward(net, trace, coeff).param_grad.dot(tangent);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("adam first step has magnitude ~ lr and descends quadratics") {
  const double lr = 0.01;
  AdamState adam = adam_init(3, lr);
  Eigen::VectorXd params(3);
  params << 1.0, -2.0, 0.5;
  Eigen::VectorXd grad(3);
  grad << 0.3, -4.0, 1e-12;  // the tiny component is damped by eps
  const Eigen::VectorXd before = params;
  adam_step(adam, params, grad);
  // First bias-corrected step is lr * g / (|g| + eps), opposite to g.
  CHECK(params(0) == doctest::Approx(before(0) - lr).epsilon(1e-6));
  CHECK(params(1) == doctest::Approx(before(1) + lr).epsilon(1e-6));
  CHECK(std::abs(params(2) - before(2)) < lr * 1e-3);

  // Minimize (x - 3)^2: gradient 2(x - 3).
  AdamState opt = adam_init(1, 0.1);
  Eigen::VectorXd x(1);
  x << -5.0;
  for (int i = 0; i < 500; ++i) {
    Eigen::VectorXd g(1);
    g << 2.0 * (x(0) - 3.0);
    adam_step(opt, x, g);
  }
  CHECK(x(0) == doctest::Approx(3.0).epsilon(0.01));
  CHECK(opt.t == 500);
}
