#include "carsm/critic.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "carsm/envs.hpp"

namespace carsm::critic {

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
  if (capacity == 0)
    throw std::invalid_argument("ReplayBuffer: zero capacity");
  slots_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (slots_.size() < capacity_) {
    slots_.push_back(std::move(t));
  } else {
    slots_[write_] = std::move(t);
  }
  write_ = (write_ + 1) % capacity_;
}

std::vector<size_t> ReplayBuffer::sample_slots(int n, Rng& rng) const {
  if (n < 0 || static_cast<size_t>(n) > slots_.size())
    throw std::invalid_argument("sample_slots: n exceeds buffer size");
  // Floyd's algorithm: n distinct values with exactly n rng draws.
  std::vector<size_t> out;
  out.reserve(n);
  std::unordered_set<size_t> chosen;
  const size_t total = slots_.size();
  for (size_t j = total - n; j < total; ++j) {
    const size_t t = static_cast<size_t>(rng.uniform_int(static_cast<int>(j) + 1));
    if (chosen.insert(t).second) {
      out.push_back(t);
    } else {
      chosen.insert(j);
      out.push_back(j);
    }
  }
  return out;
}

Eigen::VectorXd critic_input(const Eigen::VectorXd& state,
                             const ActionVector& action, int n_choices) {
  Eigen::VectorXd in(state.size() + static_cast<long>(action.size()));
  in.head(state.size()) = state;
  for (size_t k = 0; k < action.size(); ++k)
    in(state.size() + static_cast<long>(k)) =
        envs::discretize_action(action[k], n_choices);
  return in;
}

double critic_eval(const approx::Mlp& critic, const Eigen::VectorXd& state,
                   const ActionVector& action, int n_choices) {
  return mlp_forward(critic, critic_input(state, action, n_choices))(0);
}

std::vector<double> critic_eval_batch(const approx::Mlp& critic,
                                      const std::vector<Eigen::VectorXd>& states,
                                      const std::vector<ActionVector>& actions,
                                      int n_choices) {
  if (states.size() != actions.size())
    throw std::invalid_argument("critic_eval_batch: length mismatch");
  if (states.empty()) return {};
  Eigen::MatrixXd inputs(critic.in_dim(), states.size());
  for (size_t i = 0; i < states.size(); ++i)
    inputs.col(i) = critic_input(states[i], actions[i], n_choices);
  const Eigen::MatrixXd q = mlp_forward(critic, inputs);
  std::vector<double> out(states.size());
  for (size_t i = 0; i < states.size(); ++i) out[i] = q(0, i);
  return out;
}

void soft_update(TargetNets& targets, const approx::Mlp& policy,
                 const approx::Mlp& critic, double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw std::invalid_argument("soft_update: tau outside [0, 1]");
  const Eigen::VectorXd p_new =
      tau * flatten(policy) + (1.0 - tau) * flatten(targets.policy);
  const Eigen::VectorXd c_new =
      tau * flatten(critic) + (1.0 - tau) * flatten(targets.critic);
  unflatten(targets.policy, p_new);
  unflatten(targets.critic, c_new);
}

namespace {

// Expected Q'(s', .) under the target policy for a set of non-terminal
// next states, handled as one batched forward per enumeration/sampling
// group. k_dims and n_choices describe the action space.
std::vector<double> expected_next_q(const std::vector<Eigen::VectorXd>& next,
                                    const TargetNets& targets, int k_dims,
                                    int n_choices, int expectation_samples,
                                    Rng& rng) {
  std::vector<double> out(next.size(), 0.0);
  if (next.empty()) return out;
  const int n_states = static_cast<int>(next.size());

  // Target-policy probabilities for every next state in one pass.
  Eigen::MatrixXd obs(targets.policy.in_dim(), n_states);
  for (int i = 0; i < n_states; ++i) obs.col(i) = next[i];
  const Eigen::MatrixXd flat_logits = mlp_forward(targets.policy, obs);

  double joint_count = 1.0;
  for (int k = 0; k < k_dims; ++k) {
    joint_count *= n_choices;
    if (joint_count > 1024.0) break;
  }
  const bool enumerate = k_dims == 1 || joint_count <= 1024.0;

  if (enumerate) {
    const long n_joint = static_cast<long>(std::llround(
        std::pow(static_cast<double>(n_choices), static_cast<double>(k_dims))));
    Eigen::MatrixXd inputs(targets.critic.in_dim(),
                           static_cast<long>(n_states) * n_joint);
    std::vector<Eigen::MatrixXd> probs(n_states);
    for (int i = 0; i < n_states; ++i)
      probs[i] = policy::action_probs(
          policy::logits_from_flat(flat_logits.col(i), k_dims, n_choices));

    ActionVector a(k_dims, 0);
    for (long idx = 0; idx < n_joint; ++idx) {
      long rem = idx;
      for (int k = k_dims - 1; k >= 0; --k) {
        a[k] = static_cast<int>(rem % n_choices);
        rem /= n_choices;
      }
      for (int i = 0; i < n_states; ++i)
        inputs.col(static_cast<long>(i) * n_joint + idx) =
            critic_input(next[i], a, n_choices);
    }
    const Eigen::MatrixXd q = mlp_forward(targets.critic, inputs);
    for (long idx = 0; idx < n_joint; ++idx) {
      long rem = idx;
      for (int k = k_dims - 1; k >= 0; --k) {
        a[k] = static_cast<int>(rem % n_choices);
        rem /= n_choices;
      }
      for (int i = 0; i < n_states; ++i) {
        double p = 1.0;
        for (int k = 0; k < k_dims; ++k) p *= probs[i](k, a[k]);
        out[i] += p * q(0, static_cast<long>(i) * n_joint + idx);
      }
    }
    return out;
  }

  // Monte-Carlo expectation: expectation_samples i.i.d. target-policy
  // actions per state.
  const int m = expectation_samples;
  Eigen::MatrixXd inputs(targets.critic.in_dim(),
                         static_cast<long>(n_states) * m);
  for (int i = 0; i < n_states; ++i) {
    const Eigen::MatrixXd p = policy::action_probs(
        policy::logits_from_flat(flat_logits.col(i), k_dims, n_choices));
    ActionVector a(k_dims);
    for (int s = 0; s < m; ++s) {
      for (int k = 0; k < k_dims; ++k) {
        const double u = rng.uniform();
        double acc = 0.0;
        int pick = n_choices - 1;
        for (int c = 0; c < n_choices; ++c) {
          acc += p(k, c);
          if (u <= acc) {
            pick = c;
            break;
          }
        }
        a[k] = pick;
      }
      inputs.col(static_cast<long>(i) * m + s) =
          critic_input(next[i], a, n_choices);
    }
  }
  const Eigen::MatrixXd q = mlp_forward(targets.critic, inputs);
  for (int i = 0; i < n_states; ++i) {
    double total = 0.0;
    for (int s = 0; s < m; ++s) total += q(0, static_cast<long>(i) * m + s);
    out[i] = total / m;
  }
  return out;
}

}  // namespace

std::vector<double> off_policy_targets(
    const std::vector<const Transition*>& batch, const TargetNets& targets,
    double gamma, int n_choices, int expectation_samples, Rng& rng) {
  std::vector<double> y(batch.size());
  std::vector<Eigen::VectorXd> next;
  std::vector<size_t> next_pos;
  for (size_t i = 0; i < batch.size(); ++i) {
    y[i] = batch[i]->reward;
    if (!batch[i]->done) {
      next.push_back(batch[i]->next_state);
      next_pos.push_back(i);
    }
  }
  if (next.empty()) return y;
  const int k_dims = static_cast<int>(batch[next_pos[0]]->action.size());
  const std::vector<double> eq = expected_next_q(
      next, targets, k_dims, n_choices, expectation_samples, rng);
  for (size_t i = 0; i < next_pos.size(); ++i)
    y[next_pos[i]] += gamma * eq[i];
  return y;
}

std::vector<double> on_policy_targets(const std::vector<double>& rewards,
                                      double gamma) {
  std::vector<double> y(rewards.size());
  double acc = 0.0;
  for (size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    y[t] = acc;
  }
  return y;
}

std::vector<double> critic_update(approx::Mlp& critic,
                                  approx::AdamState& adam,
                                  const ReplayBuffer& buffer,
                                  const std::vector<Eigen::VectorXd>& states,
                                  const std::vector<ActionVector>& actions,
                                  const std::vector<double>& y_on,
                                  const TargetNets& targets, double gamma,
                                  int n_choices, int n_critic,
                                  int expectation_samples, Rng& rng) {
  const int horizon = static_cast<int>(states.size());
  if (actions.size() != states.size() || y_on.size() != states.size())
    throw std::invalid_argument("critic_update: trajectory length mismatch");
  if (horizon == 0 || n_critic == 0) return {};
  if (buffer.size() < static_cast<size_t>(horizon))
    throw std::invalid_argument("critic_update: buffer smaller than batch");

  // Off-policy targets are a pure function of the (frozen) target nets and
  // the replay slot, so they are computed once per slot per update.
  std::vector<double> slot_target(buffer.size(), 0.0);
  std::vector<char> slot_known(buffer.size(), 0);

  // On-policy inputs never change across the n_critic steps.
  Eigen::MatrixXd on_inputs(critic.in_dim(), horizon);
  for (int t = 0; t < horizon; ++t)
    on_inputs.col(t) = critic_input(states[t], actions[t], n_choices);

  std::vector<double> losses;
  losses.reserve(n_critic);
  Eigen::VectorXd params = flatten(critic);

  for (int step = 0; step < n_critic; ++step) {
    const std::vector<size_t> slots = buffer.sample_slots(horizon, rng);

    std::vector<const Transition*> fresh;
    std::vector<size_t> fresh_slots;
    for (size_t s : slots)
      if (!slot_known[s]) {
        fresh.push_back(&buffer.at(s));
        fresh_slots.push_back(s);
      }
    if (!fresh.empty()) {
      const std::vector<double> ys = off_policy_targets(
          fresh, targets, gamma, n_choices, expectation_samples, rng);
      for (size_t i = 0; i < fresh_slots.size(); ++i) {
        slot_target[fresh_slots[i]] = ys[i];
        slot_known[fresh_slots[i]] = 1;
      }
    }

    const int total = horizon + static_cast<int>(slots.size());
    Eigen::MatrixXd inputs(critic.in_dim(), total);
    Eigen::VectorXd target(total);
    for (size_t i = 0; i < slots.size(); ++i) {
      const Transition& tr = buffer.at(slots[i]);
      inputs.col(static_cast<long>(i)) =
          critic_input(tr.state, tr.action, n_choices);
      target(static_cast<long>(i)) = slot_target[slots[i]];
    }
    for (int t = 0; t < horizon; ++t) {
      inputs.col(slots.size() + t) = on_inputs.col(t);
      target(static_cast<long>(slots.size()) + t) = y_on[t];
    }

    const approx::ForwardTrace trace = mlp_forward_trace(critic, inputs);
    const Eigen::VectorXd residual =
        target - trace.output().row(0).transpose();
    losses.push_back(residual.squaredNorm());

    const Eigen::MatrixXd out_grad = (-2.0 * residual).transpose();
    const approx::BackwardResult back = mlp_backward(critic, trace, out_grad);
    adam_step(adam, params, back.param_grad);
    unflatten(critic, params);
  }
  return losses;
}

}  // namespace carsm::critic
