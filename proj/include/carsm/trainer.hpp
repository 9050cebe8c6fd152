#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "carsm/critic.hpp"
#include "carsm/envs.hpp"
#include "carsm/mlp.hpp"
#include "carsm/policy.hpp"
#include "carsm/trpo.hpp"

namespace carsm::trainer {

struct RunConfig {
  std::string algo = "carsm";  // carsm | a2c | arsm-mc | trpo | trpo-carsm
  std::string env = "cartpole";  // cartpole | cartpole-cont | acrobot | bandit
  int n_choices = 2;             // C for grid-valued environments
  int episodes = 1000;
  uint64_t seed = 1;
  double gamma = 0.99;
  // NaN means "use the per-algorithm default" (see resolve_defaults).
  double lr_policy = std::numeric_limits<double>::quiet_NaN();
  double lr_critic = std::numeric_limits<double>::quiet_NaN();
  int n_critic = 50;              // critic steps per policy update
  double tau = 0.01;              // target soft-update rate
  double alpha0 = 0.01;           // initial entropy coefficient
  double alpha_decay = 0.999;     // per-episode multiplicative decay
  int expectation_samples = 16;   // M when the expectation is sampled
  int replay_capacity = 100000;
  int rollout_budget = 16;        // pseudo-rollout cap per update (arsm-mc)
  int v_iter = 10;                // value steps per batch (a2c)
  double value_coef = 0.5;
  double gae_lambda = 0.95;
  bool gae_normalize = true;
  std::vector<int> hidden = {64, 64};
  trpo::TrpoConfig trpo;
  // Stop once the 100-episode moving average (full window) reaches this.
  std::optional<double> stop_threshold;
  std::string out;  // CSV path; empty keeps the run in memory only
};

// Fills learning rates that make sense per algorithm when the caller left
// them unset (NaN): 0.01 for the swap-and-merge family, 3e-4 for a2c.
void resolve_defaults(RunConfig& cfg);

struct EpisodeRow {
  int episode = 0;       // 1-based
  long timesteps = 0;    // cumulative, including pseudo-rollout steps
  double ret = 0.0;      // undiscounted episode return
  double avg100 = 0.0;   // moving average over the last <= 100 episodes
  double alpha = 0.0;    // entropy coefficient used this episode
  double critic_loss = 0.0;  // mean loss across this episode's critic steps
  long wall_ms = 0;      // always 0 in the log; real timing goes to the
                         // manifest so identical runs stay byte-identical
};

struct Trajectory {
  std::vector<Eigen::VectorXd> states;
  std::vector<policy::DirichletMatrix> dirichlets;
  std::vector<policy::PolicyLogits> logits;
  std::vector<policy::ActionVector> actions;
  std::vector<double> rewards;
  std::vector<unsigned char> dones;
  std::vector<envs::EnvState> snapshots;  // pre-step states, when requested
  Eigen::VectorXd final_state;
  bool final_done = false;

  int length() const { return static_cast<int>(states.size()); }
  double episode_return() const;
};

// Runs one episode under the current policy, recording states, Dirichlet
// draws, logits, actions and rewards; optionally snapshots the environment
// before each step and pushes transitions into a replay buffer.
Trajectory collect_episode(envs::Env& env, const approx::Mlp& policy_net,
                           Rng& rng, critic::ReplayBuffer* buffer,
                           bool with_snapshots);

struct TrainResult {
  std::vector<EpisodeRow> rows;
  long env_steps = 0;     // environment steps from episode collection
  long pseudo_steps = 0;  // environment steps from pseudo rollouts
  long max_rollouts_per_update = 0;
  std::vector<double> accepted_kls;  // per accepted trust-region step
  bool aborted = false;
  std::string abort_reason;
  double wall_ms = 0.0;  // measured run time (manifest only)

  // First episode (1-based) at which the moving average over the previous
  // `window` episodes reaches the threshold; -1 if never, and episodes
  // before a full window never qualify.
  int episodes_to(double threshold, int window = 100) const;
};

TrainResult train_run(const RunConfig& cfg);

void write_csv(const TrainResult& result, const std::string& path);
std::string csv_text(const TrainResult& result);
void write_manifest(const RunConfig& cfg, const TrainResult& result,
                    const std::string& path);

}  // namespace carsm::trainer
