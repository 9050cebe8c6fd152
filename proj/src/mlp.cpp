#include "carsm/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "carsm/rng.hpp"

namespace carsm::approx {

Mlp mlp_init(const std::vector<int>& sizes, uint64_t seed) {
  if (sizes.size() < 2)
    throw std::invalid_argument("mlp_init: need at least input and output");
  for (int s : sizes)
    if (s < 1) throw std::invalid_argument("mlp_init: non-positive layer size");
  Rng rng(seed);
  Mlp net;
  net.sizes = sizes;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int rows = sizes[l + 1];
    const int cols = sizes[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r)
        w(r, c) = (2.0 * rng.uniform() - 1.0) * scale;
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(rows));
  }
  return net;
}

long param_count(const Mlp& net) {
  long n = 0;
  for (size_t l = 0; l < net.weights.size(); ++l)
    n += net.weights[l].size() + net.biases[l].size();
  return n;
}

ParameterVector flatten(const Mlp& net) {
  ParameterVector out(param_count(net));
  long pos = 0;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    const auto& w = net.weights[l];
    out.segment(pos, w.size()) =
        Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
    pos += w.size();
    out.segment(pos, net.biases[l].size()) = net.biases[l];
    pos += net.biases[l].size();
  }
  return out;
}

void unflatten(Mlp& net, const ParameterVector& params) {
  if (params.size() != param_count(net))
    throw std::invalid_argument("unflatten: wrong parameter count");
  long pos = 0;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    auto& w = net.weights[l];
    Eigen::Map<Eigen::VectorXd>(w.data(), w.size()) =
        params.segment(pos, w.size());
    pos += w.size();
    net.biases[l] = params.segment(pos, net.biases[l].size());
    pos += net.biases[l].size();
  }
}

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& input) {
  if (input.rows() != net.in_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  Eigen::MatrixXd h = input;
  const size_t last = net.weights.size() - 1;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    Eigen::MatrixXd z = (net.weights[l] * h).colwise() + net.biases[l];
    h = (l == last) ? std::move(z) : z.array().tanh().matrix();
  }
  return h;
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input) {
  return mlp_forward(net, Eigen::MatrixXd(input)).col(0);
}

ForwardTrace mlp_forward_trace(const Mlp& net, const Eigen::MatrixXd& input) {
  if (input.rows() != net.in_dim())
    throw std::invalid_argument("mlp_forward_trace: input dimension mismatch");
  ForwardTrace trace;
  trace.layers.reserve(net.weights.size() + 1);
  trace.layers.push_back(input);
  const size_t last = net.weights.size() - 1;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    Eigen::MatrixXd z =
        (net.weights[l] * trace.layers.back()).colwise() + net.biases[l];
    trace.layers.push_back(l == last ? std::move(z)
                                     : z.array().tanh().matrix());
  }
  return trace;
}

BackwardResult mlp_backward(const Mlp& net, const ForwardTrace& trace,
                            const Eigen::MatrixXd& out_grad) {
  const size_t n_layers = net.weights.size();
  if (trace.layers.size() != n_layers + 1)
    throw std::invalid_argument("mlp_backward: trace does not match network");
  if (out_grad.rows() != net.out_dim() ||
      out_grad.cols() != trace.output().cols())
    throw std::invalid_argument("mlp_backward: out_grad shape mismatch");

  BackwardResult res;
  res.param_grad.resize(param_count(net));

  // Offsets of each layer's weight block in the flat layout.
  std::vector<long> offsets(n_layers);
  long pos = 0;
  for (size_t l = 0; l < n_layers; ++l) {
    offsets[l] = pos;
    pos += net.weights[l].size() + net.biases[l].size();
  }

  Eigen::MatrixXd delta = out_grad;  // gradient w.r.t. pre-activation z_l
  for (size_t li = n_layers; li-- > 0;) {
    if (li != n_layers - 1)
      delta = delta.cwiseProduct(
          (1.0 - trace.layers[li + 1].array().square()).matrix());
    Eigen::MatrixXd grad_w = delta * trace.layers[li].transpose();
    Eigen::VectorXd grad_b = delta.rowwise().sum();
    res.param_grad.segment(offsets[li], grad_w.size()) =
        Eigen::Map<const Eigen::VectorXd>(grad_w.data(), grad_w.size());
    res.param_grad.segment(offsets[li] + grad_w.size(), grad_b.size()) =
        grad_b;
    delta = net.weights[li].transpose() * delta;
  }
  res.input_grad = std::move(delta);
  return res;
}

Eigen::MatrixXd mlp_jvp(const Mlp& net, const ForwardTrace& trace,
                        const ParameterVector& tangent) {
  if (tangent.size() != param_count(net))
    throw std::invalid_argument("mlp_jvp: wrong tangent size");
  const size_t n_layers = net.weights.size();
  const long batch = trace.layers[0].cols();

  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(net.in_dim(), batch);
  long pos = 0;
  for (size_t l = 0; l < n_layers; ++l) {
    const auto& w = net.weights[l];
    Eigen::Map<const Eigen::MatrixXd> dw(tangent.data() + pos, w.rows(),
                                         w.cols());
    pos += w.size();
    Eigen::Map<const Eigen::VectorXd> db(tangent.data() + pos,
                                         net.biases[l].size());
    pos += net.biases[l].size();

    Eigen::MatrixXd tz =
        ((dw * trace.layers[l] + net.weights[l] * t).colwise() + db);
    if (l != n_layers - 1)
      tz = tz.cwiseProduct(
          (1.0 - trace.layers[l + 1].array().square()).matrix());
    t = std::move(tz);
  }
  return t;
}

AdamState adam_init(long n_params, double lr) {
  AdamState s;
  s.lr = lr;
  s.m = Eigen::VectorXd::Zero(n_params);
  s.v = Eigen::VectorXd::Zero(n_params);
  return s;
}

void adam_step(AdamState& state, ParameterVector& params,
               const ParameterGradient& loss_grad) {
  if (params.size() != state.m.size() || loss_grad.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.t += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * loss_grad;
  state.v = state.beta2 * state.v.array().matrix() +
            (1.0 - state.beta2) * loss_grad.cwiseProduct(loss_grad);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  params.array() -= state.lr * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + state.eps);
}

}  // namespace carsm::approx
