#pragma once

#include <Eigen/Dense>
#include <vector>

#include "carsm/mlp.hpp"
#include "carsm/policy.hpp"

namespace carsm::baselines {

using policy::ActionVector;

// REINFORCE ascent gradient d/dtheta sum_t y_t log pi(a_t | s_t), with y the
// on-policy discounted returns.
approx::ParameterGradient reinforce_gradient(
    const approx::Mlp& policy_net, const std::vector<Eigen::VectorXd>& states,
    const std::vector<ActionVector>& actions, const std::vector<double>& y_on,
    int n_choices);

struct GaeConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  bool normalize = true;
};

// Generalized advantage estimation over one trajectory segment.
// values has one more entry than rewards (the bootstrap value of the final
// state); a set done flag cuts both the TD residual and the recursion:
//   delta_t = r_t + gamma (1 - done_t) V_{t+1} - V_t
//   A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}.
// With normalize set, advantages are shifted and scaled to zero mean and
// unit population variance (left untouched if their variance is zero).
std::vector<double> gae(const std::vector<double>& rewards,
                        const std::vector<double>& values,
                        const std::vector<unsigned char>& dones,
                        const GaeConfig& cfg);

struct A2cLosses {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

// One advantage-actor-critic update on a collected batch, optimizing
//   L = L_policy + value_coef * L_value - entropy_coef * H
// with L_policy = -(1/T) sum_t A_t log pi(a_t | s_t) and
// L_value = (1/T) sum_t (y_t - V(s_t))^2 against the on-policy returns.
// The policy takes one descent step; the value network takes v_iter steps
// (advantages are computed from the value network as it stood on entry).
// Returns the losses measured before the update.
A2cLosses a2c_update(approx::Mlp& policy_net, approx::AdamState& policy_adam,
                     approx::Mlp& value_net, approx::AdamState& value_adam,
                     const std::vector<Eigen::VectorXd>& states,
                     const std::vector<ActionVector>& actions,
                     const std::vector<double>& rewards,
                     const std::vector<unsigned char>& dones,
                     const Eigen::VectorXd& final_state, int n_choices,
                     const GaeConfig& gae_cfg, double value_coef,
                     double entropy_coef, int v_iter);

}  // namespace carsm::baselines
