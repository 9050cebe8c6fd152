#include "carsm/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace carsm::policy {

DirichletMatrix sample_dirichlet(int k_dims, int n_choices, Rng& rng) {
  if (k_dims < 1 || n_choices < 1)
    throw std::invalid_argument("sample_dirichlet: non-positive shape");
  DirichletMatrix dir(k_dims, n_choices);
  for (int k = 0; k < k_dims; ++k) {
    double total = 0.0;
    for (int c = 0; c < n_choices; ++c) {
      dir(k, c) = rng.exponential();
      total += dir(k, c);
    }
    dir.row(k) /= total;
  }
  return dir;
}

int argmin_index(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) < v(best)) best = i;
  return best;
}

ActionVector select_action(const PolicyLogits& logits,
                           const DirichletMatrix& dir) {
  if (logits.rows() != dir.rows() || logits.cols() != dir.cols())
    throw std::invalid_argument("select_action: shape mismatch");
  ActionVector action(logits.rows());
  for (int k = 0; k < logits.rows(); ++k) {
    const Eigen::VectorXd z = dir.row(k).array().log().matrix().transpose() -
                              logits.row(k).transpose();
    action[k] = argmin_index(z);
  }
  return action;
}

Eigen::MatrixXd action_probs(const PolicyLogits& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (int k = 0; k < logits.rows(); ++k) {
    const double m = logits.row(k).maxCoeff();
    Eigen::ArrayXd e = (logits.row(k).array() - m).exp();
    p.row(k) = (e / e.sum()).matrix();
  }
  return p;
}

double log_prob(const PolicyLogits& logits, const ActionVector& action) {
  if (static_cast<int>(action.size()) != logits.rows())
    throw std::invalid_argument("log_prob: action length mismatch");
  double lp = 0.0;
  for (int k = 0; k < logits.rows(); ++k) {
    const int a = action[k];
    if (a < 0 || a >= logits.cols())
      throw std::invalid_argument("log_prob: action index out of range");
    const double m = logits.row(k).maxCoeff();
    const double lse = std::log((logits.row(k).array() - m).exp().sum()) + m;
    lp += logits(k, a) - lse;
  }
  return lp;
}

Eigen::MatrixXd log_prob_grad(const PolicyLogits& logits,
                              const ActionVector& action) {
  Eigen::MatrixXd g = -action_probs(logits);
  for (int k = 0; k < logits.rows(); ++k) g(k, action[k]) += 1.0;
  return g;
}

double entropy(const PolicyLogits& logits) {
  const Eigen::MatrixXd p = action_probs(logits);
  double h = 0.0;
  for (int k = 0; k < p.rows(); ++k)
    for (int c = 0; c < p.cols(); ++c)
      if (p(k, c) > 0.0) h -= p(k, c) * std::log(p(k, c));
  return h;
}

Eigen::MatrixXd entropy_grad(const PolicyLogits& logits) {
  const Eigen::MatrixXd p = action_probs(logits);
  Eigen::MatrixXd g(p.rows(), p.cols());
  for (int k = 0; k < p.rows(); ++k) {
    double h_k = 0.0;
    for (int c = 0; c < p.cols(); ++c)
      if (p(k, c) > 0.0) h_k -= p(k, c) * std::log(p(k, c));
    for (int c = 0; c < p.cols(); ++c) {
      const double lp = p(k, c) > 0.0 ? std::log(p(k, c)) : 0.0;
      g(k, c) = -p(k, c) * (lp + h_k);
    }
  }
  return g;
}

PolicyLogits logits_from_flat(const Eigen::VectorXd& flat, int k_dims,
                              int n_choices) {
  if (flat.size() != static_cast<long>(k_dims) * n_choices)
    throw std::invalid_argument("logits_from_flat: size mismatch");
  PolicyLogits logits(k_dims, n_choices);
  for (int k = 0; k < k_dims; ++k)
    logits.row(k) = flat.segment(static_cast<long>(k) * n_choices, n_choices);
  return logits;
}

Eigen::VectorXd flat_from_logits(const Eigen::MatrixXd& logits) {
  Eigen::VectorXd flat(logits.size());
  for (int k = 0; k < logits.rows(); ++k)
    flat.segment(static_cast<long>(k) * logits.cols(), logits.cols()) =
        logits.row(k);
  return flat;
}

GaussianDraw gaussian_sample(const GaussianPolicyParams& params, Rng& rng) {
  const double eps = rng.normal();
  return {params.mu + params.sigma * eps, eps};
}

double gaussian_log_prob(const GaussianPolicyParams& params, double action) {
  if (params.sigma <= 0.0)
    throw std::invalid_argument("gaussian_log_prob: sigma must be positive");
  const double z = (action - params.mu) / params.sigma;
  return -0.5 * z * z - std::log(params.sigma) -
         0.5 * std::log(6.283185307179586477);
}

double gaussian_entropy(const GaussianPolicyParams& params) {
  if (params.sigma <= 0.0)
    throw std::invalid_argument("gaussian_entropy: sigma must be positive");
  return 0.5 * std::log(6.283185307179586477 * 2.718281828459045235 *
                        params.sigma * params.sigma);
}

}  // namespace carsm::policy
