#pragma once

#include <Eigen/Dense>
#include <vector>

#include "carsm/mlp.hpp"
#include "carsm/policy.hpp"
#include "carsm/rng.hpp"

namespace carsm::critic {

using policy::ActionVector;

struct Transition {
  Eigen::VectorXd state;
  ActionVector action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool done = false;
};

// Fixed-capacity ring buffer; once full, new transitions overwrite the
// oldest ones. Slot indices stay valid between pushes, which lets callers
// cache per-slot computations while the buffer is not being written.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);

  void push(Transition t);
  size_t size() const { return slots_.size(); }
  size_t capacity() const { return capacity_; }
  const Transition& at(size_t slot) const { return slots_[slot]; }

  // n distinct slot indices drawn uniformly without replacement.
  std::vector<size_t> sample_slots(int n, Rng& rng) const;

 private:
  size_t capacity_;
  size_t write_ = 0;
  std::vector<Transition> slots_;
};

// Critic input: the state followed by each action index mapped onto the
// [-1, 1] grid, so the feature layout is (n_s + K).
Eigen::VectorXd critic_input(const Eigen::VectorXd& state,
                             const ActionVector& action, int n_choices);

double critic_eval(const approx::Mlp& critic, const Eigen::VectorXd& state,
                   const ActionVector& action, int n_choices);

// One batched forward for many (state, action) pairs at a shared state
// dimension; used for pseudo-action values and target computation.
std::vector<double> critic_eval_batch(const approx::Mlp& critic,
                                      const std::vector<Eigen::VectorXd>& states,
                                      const std::vector<ActionVector>& actions,
                                      int n_choices);

// Slowly tracking copies of the policy and critic networks.
struct TargetNets {
  approx::Mlp policy;
  approx::Mlp critic;
};

// theta' <- tau * theta + (1 - tau) * theta', applied to both target nets.
void soft_update(TargetNets& targets, const approx::Mlp& policy,
                 const approx::Mlp& critic, double tau);

// Expected-SARSA targets y = r + gamma E_{a ~ pi'(.|s')}[ Q'(s', a) ], with
// the expectation term zeroed on terminal transitions. The expectation is
// exact (joint enumeration) when K == 1 or C^K <= 1024, and otherwise a mean
// over expectation_samples i.i.d. actions drawn from the target policy.
std::vector<double> off_policy_targets(
    const std::vector<const Transition*>& batch, const TargetNets& targets,
    double gamma, int n_choices, int expectation_samples, Rng& rng);

// Discounted reward-to-go within the trajectory: y_t = r_t + gamma y_{t+1},
// with y_{T-1} = r_{T-1}.
std::vector<double> on_policy_targets(const std::vector<double>& rewards,
                                      double gamma);

// n_critic Adam steps on the Bellman loss
//   sum_l (y_off_l - Q(s_l, a_l))^2 + sum_t (y_on_t - Q(s_t, a_t))^2,
// where each step draws a fresh batch of L = T replay transitions and the
// on-policy half always uses the current trajectory. Off-policy targets are
// cached per replay slot while the target networks are frozen. Returns the
// loss observed at each step.
std::vector<double> critic_update(approx::Mlp& critic,
                                  approx::AdamState& adam,
                                  const ReplayBuffer& buffer,
                                  const std::vector<Eigen::VectorXd>& states,
                                  const std::vector<ActionVector>& actions,
                                  const std::vector<double>& y_on,
                                  const TargetNets& targets, double gamma,
                                  int n_choices, int n_critic,
                                  int expectation_samples, Rng& rng);

}  // namespace carsm::critic
