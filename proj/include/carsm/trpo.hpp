#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "carsm/mlp.hpp"
#include "carsm/policy.hpp"

namespace carsm::trpo {

struct TrpoConfig {
  double delta = 0.01;          // KL trust region radius
  double damping = 0.1;         // added to the Fisher diagonal
  int cg_iters = 10;
  double cg_tol = 1e-10;
  int backtrack_steps = 10;
  double backtrack_ratio = 0.5;
};

// Mean over states of sum_k KL( p_old_k || p_new_k ) for factored
// categorical policies; probabilities are clamped at 1e-12 inside the log.
double kl_factored_categorical(const std::vector<Eigen::MatrixXd>& probs_old,
                               const std::vector<Eigen::MatrixXd>& probs_new);

using MatVecFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Fisher-vector product for the average KL over the traced state batch:
//   H v = (1/N) J^T [ (diag(p) - p p^T) (J v) ] + damping * v,
// with J the Jacobian of the flat logits in the parameters. This is the
// exact Hessian of the mean KL at the current parameters.
Eigen::VectorXd fisher_vector_product(const approx::Mlp& policy_net,
                                      const approx::ForwardTrace& trace,
                                      int k_dims, int n_choices,
                                      const Eigen::VectorXd& v,
                                      double damping);

// Plain conjugate gradient for SPD operators; stops at max_iters or when the
// residual squared norm drops below tol.
Eigen::VectorXd conjugate_gradient(const MatVecFn& apply,
                                   const Eigen::VectorXd& b, int max_iters,
                                   double tol);

struct TrpoStepResult {
  bool accepted = false;
  double kl = 0.0;           // measured KL of the accepted step
  double step_scale = 0.0;   // scale applied to the search direction
  int backtracks = 0;        // halvings tried before acceptance
  double improvement = 0.0;  // linearized improvement at acceptance
};

// Natural-gradient trust-region step along the ascent gradient: solves
// H d = g with CG, scales d by sqrt(2 delta / d^T H d), then backtracks
// (halving) until the measured KL is within delta and the linearized
// improvement is positive. Leaves the parameters unchanged if no scale is
// accepted or the gradient is zero.
TrpoStepResult trpo_step(approx::Mlp& policy_net,
                         const Eigen::VectorXd& ascent_grad,
                         const std::vector<Eigen::VectorXd>& states,
                         int k_dims, int n_choices, const TrpoConfig& cfg);

}  // namespace carsm::trpo
