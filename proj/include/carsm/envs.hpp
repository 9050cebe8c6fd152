#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "carsm/policy.hpp"
#include "carsm/rng.hpp"

namespace carsm::envs {

using policy::ActionVector;

// Maps a 0-based action index on a C-point grid to [-1, 1]:
// index i -> (2i - (C-1)) / (C-1). C = 1 maps to 0.
double discretize_action(int index, int n_choices);
Eigen::VectorXd discretize_action(const ActionVector& action, int n_choices);

// Bimodal one-step bandit. The mean reward is piecewise quadratic in the
// action a in [-1, 1] with peaks at (m-1)/2 (value c2 (1+m)^2 / 4) and
// (1+m)/2 (value c1 (1-m)^2 / 4); additive Gaussian noise has standard
// deviation noise_sd1 on the right branch (a >= m) and noise_sd2 on the left.
struct BanditConfig {
  double m = 0.0;
  double c1 = 41.0;  // right-branch curvature
  double c2 = 40.0;  // left-branch curvature
  double noise_sd1 = 2.0;
  double noise_sd2 = 1.0;
};

// Default curvatures for a given m: c1 = 40/(1-m)^2 and c2 = 41/(1+m)^2,
// which fixes the peak mean rewards at 10 (right) and 10.25 (left) for every
// m, so the left mode is always the global optimum by a margin of 0.25.
BanditConfig bandit_config_for(double m);

// Noise-free mean reward; valid for a in [-1, 1].
double bandit_mean_reward(const BanditConfig& cfg, double action);
// Derivative of the mean reward in a (the branch boundary m is treated as
// part of the left branch only at a < m, matching bandit_mean_reward).
double bandit_mean_reward_grad(const BanditConfig& cfg, double action);
// Mean reward plus branch-dependent Gaussian noise.
double bandit_reward(const BanditConfig& cfg, double action, Rng& rng);

// Snapshot of a full environment state, including the internal noise stream,
// so restore + identical actions reproduce identical trajectories bitwise.
struct EnvState {
  std::vector<double> dynamics;
  long steps = 0;
  bool done = false;
  Rng rng{0};
};

struct StepResult {
  Eigen::VectorXd next_obs;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual Eigen::VectorXd reset() = 0;
  virtual StepResult step(const ActionVector& action) = 0;
  virtual int obs_dim() const = 0;
  virtual int action_dims() const = 0;      // K
  virtual int choices_per_dim() const = 0;  // C
  virtual int episode_cap() const = 0;
  virtual EnvState snapshot() const = 0;
  virtual void restore(const EnvState& state) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// Cart-pole balancing, Euler integration at dt = 0.02, +1 reward per step,
// failure when |x| > 2.4 or |theta| > 12 degrees, episode cap 200 steps.
// Discrete mode: C = 2, force -10 or +10. Continuous mode: C-point grid,
// force = 10 * discretize_action(a).
class CartPoleEnv : public Env {
 public:
  enum class Mode { discrete, continuous };

  CartPoleEnv(Mode mode, int n_choices, uint64_t seed);

  Eigen::VectorXd reset() override;
  StepResult step(const ActionVector& action) override;
  int obs_dim() const override { return 4; }
  int action_dims() const override { return 1; }
  int choices_per_dim() const override { return n_choices_; }
  int episode_cap() const override { return 200; }
  EnvState snapshot() const override;
  void restore(const EnvState& state) override;
  std::unique_ptr<Env> clone() const override;

 private:
  Mode mode_;
  int n_choices_;
  Eigen::Vector4d state_;  // x, x_dot, theta, theta_dot
  long steps_ = 0;
  bool done_ = true;
  Rng rng_;
};

// Acrobot swing-up, RK4 integration at dt = 0.2, torque in {-1, 0, +1},
// -1 reward per step, terminates when the tip rises above one link length,
// episode cap 500 steps. Observation is
// (cos t1, sin t1, cos t2, sin t2, t1_dot, t2_dot).
class AcrobotEnv : public Env {
 public:
  explicit AcrobotEnv(uint64_t seed);

  Eigen::VectorXd reset() override;
  StepResult step(const ActionVector& action) override;
  int obs_dim() const override { return 6; }
  int action_dims() const override { return 1; }
  int choices_per_dim() const override { return 3; }
  int episode_cap() const override { return 500; }
  EnvState snapshot() const override;
  void restore(const EnvState& state) override;
  std::unique_ptr<Env> clone() const override;

 private:
  Eigen::VectorXd observe() const;
  Eigen::Vector4d state_;  // theta1, theta2, theta1_dot, theta2_dot
  long steps_ = 0;
  bool done_ = true;
  Rng rng_;
};

// One-step bandit wrapped as an environment: a single constant observation,
// one action on a C-point grid, reward from bandit_reward, then done.
class BanditEnv : public Env {
 public:
  BanditEnv(const BanditConfig& cfg, int n_choices, uint64_t seed);

  Eigen::VectorXd reset() override;
  StepResult step(const ActionVector& action) override;
  int obs_dim() const override { return 1; }
  int action_dims() const override { return 1; }
  int choices_per_dim() const override { return n_choices_; }
  int episode_cap() const override { return 1; }
  EnvState snapshot() const override;
  void restore(const EnvState& state) override;
  std::unique_ptr<Env> clone() const override;

 private:
  BanditConfig cfg_;
  int n_choices_;
  long steps_ = 0;
  bool done_ = true;
  Rng rng_;
};

// Factory for the environments exposed on the command line:
// cartpole, cartpole-cont, acrobot, bandit.
std::unique_ptr<Env> make_env(const std::string& name, int n_choices,
                              uint64_t seed);

}  // namespace carsm::envs
