#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace carsm::approx {

using ParameterVector = Eigen::VectorXd;
using ParameterGradient = Eigen::VectorXd;

// Fully connected network with tanh hidden activations and a linear output
// layer. weights[l] has shape sizes[l+1] x sizes[l]; batched inputs are
// matrices with one sample per column.
struct Mlp {
  std::vector<int> sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int in_dim() const { return sizes.front(); }
  int out_dim() const { return sizes.back(); }
};

// Weights are drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases
// start at zero. The draw order (layer by layer, column-major within each
// weight matrix) is fixed, so a seed fully determines the network.
Mlp mlp_init(const std::vector<int>& sizes, uint64_t seed);

long param_count(const Mlp& net);

// Flat parameter layout: for each layer, the weight matrix in column-major
// order followed by the bias vector. flatten/unflatten are exact inverses.
ParameterVector flatten(const Mlp& net);
void unflatten(Mlp& net, const ParameterVector& params);

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& input);
Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input);

// Post-activation values per layer; layers[0] is the input batch and
// layers.back() the network output. Needed by backward and JVP.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> layers;
  const Eigen::MatrixXd& output() const { return layers.back(); }
};

ForwardTrace mlp_forward_trace(const Mlp& net, const Eigen::MatrixXd& input);

struct BackwardResult {
  ParameterGradient param_grad;
  Eigen::MatrixXd input_grad;
};

// Reverse-mode gradient of sum_b out_grad(:,b) . output(:,b) with respect to
// parameters and inputs.
BackwardResult mlp_backward(const Mlp& net, const ForwardTrace& trace,
                            const Eigen::MatrixXd& out_grad);

// Forward-mode directional derivative of the outputs along a flat parameter
// tangent (inputs held fixed). Shape matches the traced output batch.
Eigen::MatrixXd mlp_jvp(const Mlp& net, const ForwardTrace& trace,
                        const ParameterVector& tangent);

// Adam with bias correction. adam_step descends along the supplied gradient;
// callers maximizing an objective pass the negated gradient.
struct AdamState {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

AdamState adam_init(long n_params, double lr);
void adam_step(AdamState& state, ParameterVector& params,
               const ParameterGradient& loss_grad);

}  // namespace carsm::approx
