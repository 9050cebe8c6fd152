#include "carsm/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "carsm/critic.hpp"

namespace carsm::baselines {

approx::ParameterGradient reinforce_gradient(
    const approx::Mlp& policy_net, const std::vector<Eigen::VectorXd>& states,
    const std::vector<ActionVector>& actions, const std::vector<double>& y_on,
    int n_choices) {
  const int horizon = static_cast<int>(states.size());
  if (actions.size() != states.size() || y_on.size() != states.size())
    throw std::invalid_argument("reinforce_gradient: length mismatch");
  if (horizon == 0)
    return Eigen::VectorXd::Zero(param_count(policy_net));
  const int k_dims = static_cast<int>(actions[0].size());

  Eigen::MatrixXd inputs(policy_net.in_dim(), horizon);
  for (int t = 0; t < horizon; ++t) inputs.col(t) = states[t];
  const approx::ForwardTrace trace = mlp_forward_trace(policy_net, inputs);

  Eigen::MatrixXd out_grad(policy_net.out_dim(), horizon);
  for (int t = 0; t < horizon; ++t) {
    const policy::PolicyLogits logits =
        policy::logits_from_flat(trace.output().col(t), k_dims, n_choices);
    out_grad.col(t) = policy::flat_from_logits(
        y_on[t] * policy::log_prob_grad(logits, actions[t]));
  }
  return mlp_backward(policy_net, trace, out_grad).param_grad;
}

std::vector<double> gae(const std::vector<double>& rewards,
                        const std::vector<double>& values,
                        const std::vector<unsigned char>& dones,
                        const GaeConfig& cfg) {
  const size_t horizon = rewards.size();
  if (values.size() != horizon + 1 || dones.size() != horizon)
    throw std::invalid_argument("gae: length mismatch");
  std::vector<double> adv(horizon, 0.0);
  double carry = 0.0;
  for (size_t t = horizon; t-- > 0;) {
    const double not_done = dones[t] ? 0.0 : 1.0;
    const double delta =
        rewards[t] + cfg.gamma * not_done * values[t + 1] - values[t];
    carry = delta + cfg.gamma * cfg.lambda * not_done * carry;
    adv[t] = carry;
  }
  if (cfg.normalize && horizon > 0) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(horizon);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(horizon);
    if (var > 0.0) {
      const double inv_sd = 1.0 / std::sqrt(var);
      for (double& a : adv) a = (a - mean) * inv_sd;
    }
  }
  return adv;
}

A2cLosses a2c_update(approx::Mlp& policy_net, approx::AdamState& policy_adam,
                     approx::Mlp& value_net, approx::AdamState& value_adam,
                     const std::vector<Eigen::VectorXd>& states,
                     const std::vector<ActionVector>& actions,
                     const std::vector<double>& rewards,
                     const std::vector<unsigned char>& dones,
                     const Eigen::VectorXd& final_state, int n_choices,
                     const GaeConfig& gae_cfg, double value_coef,
                     double entropy_coef, int v_iter) {
  const int horizon = static_cast<int>(states.size());
  if (actions.size() != states.size() || rewards.size() != states.size() ||
      dones.size() != states.size())
    throw std::invalid_argument("a2c_update: length mismatch");

  A2cLosses losses;
  if (horizon == 0) return losses;
  const int k_dims = static_cast<int>(actions[0].size());
  const double inv_t = 1.0 / static_cast<double>(horizon);

  Eigen::MatrixXd inputs(policy_net.in_dim(), horizon);
  for (int t = 0; t < horizon; ++t) inputs.col(t) = states[t];
  Eigen::MatrixXd value_inputs(value_net.in_dim(), horizon + 1);
  value_inputs.leftCols(horizon) = inputs;
  value_inputs.col(horizon) = final_state;

  // Advantages from the value network as it stands on entry.
  const Eigen::MatrixXd v_all = mlp_forward(value_net, value_inputs);
  std::vector<double> values(horizon + 1);
  for (int t = 0; t <= horizon; ++t) values[t] = v_all(0, t);
  const std::vector<double> adv = gae(rewards, values, dones, gae_cfg);
  const std::vector<double> y_on =
      critic::on_policy_targets(rewards, gae_cfg.gamma);

  // Pre-update losses for logging.
  const approx::ForwardTrace policy_trace =
      mlp_forward_trace(policy_net, inputs);
  for (int t = 0; t < horizon; ++t) {
    const policy::PolicyLogits logits =
        policy::logits_from_flat(policy_trace.output().col(t), k_dims,
                                 n_choices);
    losses.policy_loss -= adv[t] * policy::log_prob(logits, actions[t]);
    losses.entropy += policy::entropy(logits);
    const double r = y_on[t] - values[t];
    losses.value_loss += r * r;
  }
  losses.policy_loss *= inv_t;
  losses.entropy *= inv_t;
  losses.value_loss *= inv_t;
  losses.total = losses.policy_loss + value_coef * losses.value_loss -
                 entropy_coef * losses.entropy;

  // Single policy step: descend L_policy - entropy_coef * H.
  Eigen::MatrixXd out_grad(policy_net.out_dim(), horizon);
  for (int t = 0; t < horizon; ++t) {
    const policy::PolicyLogits logits =
        policy::logits_from_flat(policy_trace.output().col(t), k_dims,
                                 n_choices);
    const Eigen::MatrixXd dphi =
        -inv_t * adv[t] * policy::log_prob_grad(logits, actions[t]) -
        entropy_coef * inv_t * policy::entropy_grad(logits);
    out_grad.col(t) = policy::flat_from_logits(dphi);
  }
  Eigen::VectorXd policy_params = flatten(policy_net);
  adam_step(policy_adam, policy_params,
            mlp_backward(policy_net, policy_trace, out_grad).param_grad);
  unflatten(policy_net, policy_params);

  // v_iter value steps on the fixed on-policy targets.
  Eigen::VectorXd value_params = flatten(value_net);
  for (int it = 0; it < v_iter; ++it) {
    const approx::ForwardTrace trace = mlp_forward_trace(value_net, inputs);
    Eigen::MatrixXd residual =
        trace.output().row(0) -
        Eigen::Map<const Eigen::VectorXd>(y_on.data(), horizon).transpose();
    const Eigen::MatrixXd value_grad =
        (2.0 * value_coef * inv_t) * residual;
    adam_step(value_adam, value_params,
              mlp_backward(value_net, trace, value_grad).param_grad);
    unflatten(value_net, value_params);
  }
  return losses;
}

}  // namespace carsm::baselines
