#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "carsm/envs.hpp"
#include "carsm/parallel.hpp"

namespace carsm::toy {

// Single-state policy search on the bimodal bandit: a discrete policy over a
// C-point action grid trained with the swap-and-merge estimator versus a
// Gaussian policy trained with reparametrized gradients on the noise-free
// mean reward. Both anneal an entropy bonus quadratically,
// alpha_i = alpha0 (1 - i/i_max)^2, and both spend total_samples true-action
// draws at samples_per_iter per update.
struct ToyConfig {
  envs::BanditConfig bandit = envs::bandit_config_for(0.0);
  int n_choices = 21;
  long total_samples = 500000;
  int samples_per_iter = 100;
  double alpha0 = 0.01;
  double lr_discrete = 0.05;
  double lr_gaussian = 0.015;
  double sigma_init = 1.0;
  double sigma_floor = 1e-3;
  uint64_t seed = 1;
};

// A trial converges to an optimum when the final policy puts more than half
// its mass within one grid step (2 / (C - 1)) of that action.
struct TrialResult {
  bool global = false;    // settled on the left (higher) mode
  bool inferior = false;  // settled on the right (lower) mode
  double mass_global = 0.0;
  double mass_inferior = 0.0;
};

// Grid indices of the two optima for a config (left mode is global).
int global_arm_index(const ToyConfig& cfg);
int inferior_arm_index(const ToyConfig& cfg);

TrialResult discrete_trial(const ToyConfig& cfg, uint64_t trial_seed,
                           Eigen::MatrixXd* density_accum);
TrialResult gaussian_trial(const ToyConfig& cfg, uint64_t trial_seed,
                           Eigen::MatrixXd* density_accum);

struct ToyRun {
  int trials = 0;
  int global_count = 0;
  int inferior_count = 0;
  int undecided_count = 0;
  // Mean action density per iteration, averaged over trials: one row per
  // update, one column per grid action (the heatmap written by the CLI).
  Eigen::MatrixXd density;
};

// policy is "discrete" or "gaussian". Trials are independent streams run
// through for_each_index; the density average is reduced in trial order, so
// results are identical in serial and parallel modes.
ToyRun toy_run(const ToyConfig& cfg, const std::string& policy, int trials,
               ExecMode mode);

}  // namespace carsm::toy
