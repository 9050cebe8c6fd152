#pragma once

#include <Eigen/Dense>
#include <vector>

#include "carsm/rng.hpp"

namespace carsm::policy {

// K x C matrix of logits phi for a factored categorical policy over K action
// dimensions with C choices each. Action indices are 0-based throughout the
// code (documentation elsewhere may use 1-based indices).
using PolicyLogits = Eigen::MatrixXd;

// K x C matrix of Dirichlet(1,...,1) rows.
using DirichletMatrix = Eigen::MatrixXd;

// Joint action: one index per dimension, length K.
using ActionVector = std::vector<int>;

// One Dirichlet(1,...,1) draw per dimension: C unit exponentials per row,
// normalized to sum to one.
DirichletMatrix sample_dirichlet(int k_dims, int n_choices, Rng& rng);

// Index of the smallest entry; ties resolve to the lowest index.
int argmin_index(const Eigen::VectorXd& v);

// a_k = argmin_i ( ln pi_ki - phi_ki ). Marginally this samples from the
// softmax of each logits row.
ActionVector select_action(const PolicyLogits& logits,
                           const DirichletMatrix& dir);

// Row-wise softmax (numerically stabilized by max subtraction).
Eigen::MatrixXd action_probs(const PolicyLogits& logits);

// log pi(a | logits) = sum_k log softmax(logits)_k,a_k.
double log_prob(const PolicyLogits& logits, const ActionVector& action);

// d log pi(a) / d logits, a K x C matrix: indicator(a_k = c) - p_kc.
Eigen::MatrixXd log_prob_grad(const PolicyLogits& logits,
                              const ActionVector& action);

// Sum over dimensions of the categorical entropy.
double entropy(const PolicyLogits& logits);

// d entropy / d logits, a K x C matrix: -p_kc (ln p_kc + H_k).
Eigen::MatrixXd entropy_grad(const PolicyLogits& logits);

// Policy networks emit a flat K*C output; row k of the logits matrix is the
// contiguous segment [k*C, (k+1)*C). These two helpers are the only place
// that layout is spelled out.
PolicyLogits logits_from_flat(const Eigen::VectorXd& flat, int k_dims,
                              int n_choices);
Eigen::VectorXd flat_from_logits(const Eigen::MatrixXd& logits);

// Gaussian policy for the single-dimensional toy problem.
struct GaussianPolicyParams {
  double mu;
  double sigma;
};

struct GaussianDraw {
  double action;  // mu + sigma * noise
  double noise;   // standard normal, kept for reparametrized gradients
};

GaussianDraw gaussian_sample(const GaussianPolicyParams& params, Rng& rng);
double gaussian_log_prob(const GaussianPolicyParams& params, double action);
double gaussian_entropy(const GaussianPolicyParams& params);

}  // namespace carsm::policy
