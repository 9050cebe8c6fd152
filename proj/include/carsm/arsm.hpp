#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "carsm/envs.hpp"
#include "carsm/mlp.hpp"
#include "carsm/parallel.hpp"
#include "carsm/policy.hpp"
#include "carsm/rng.hpp"

namespace carsm::arsm {

using policy::ActionVector;
using policy::DirichletMatrix;
using policy::PolicyLogits;

// C x C table of pseudo-actions for one action dimension. Entry (c, j) holds
// the argmin action after swapping coordinates c and j of the Dirichlet row;
// the table is symmetric and its diagonal equals the true action.
using PseudoActionTable = Eigen::MatrixXi;

// O(C^2) construction: a swap changes only two entries of
// z_i = ln pi_i - phi_i, so each cell needs the swapped pair plus the best
// remaining entry, which comes from the three smallest z values.
PseudoActionTable pseudo_table(const Eigen::VectorXd& logits_row,
                               const Eigen::VectorXd& dir_row);

// Unique joint pseudo-actions across all swap pairs, true action excluded.
// member(c, j) indexes into actions, or is -1 where the joint pseudo-action
// equals the true action; actions are stored in first-seen order scanning
// pairs (c, j) with c > j. The set can hold at most C(C-1)/2 elements.
struct JointPseudoSet {
  std::vector<ActionVector> actions;
  Eigen::MatrixXi member;
};

JointPseudoSet joint_pseudo_set(const std::vector<PseudoActionTable>& tables,
                                const ActionVector& true_action);

// F(c, j): estimated value of the joint pseudo-action for swap pair (c, j);
// cells whose pseudo-action equals the true action hold y_true instead.
// pseudo_values must align with set.actions.
Eigen::MatrixXd f_matrix(const JointPseudoSet& set,
                         const std::vector<double>& pseudo_values,
                         double y_true, int n_choices);

// Per-timestep gradient coefficients, one K x C matrix. Any dimension whose
// pseudo-actions all equal its true coordinate yields an exactly zero row;
// an active dimension k gets
//   g_kc = sum_j ( F(c,j) - (1/C) sum_m F(m,j) ) ( 1/C - pi_kj ).
Eigen::MatrixXd g_tensor_step(const Eigen::MatrixXd& f,
                              const DirichletMatrix& dir,
                              const std::vector<PseudoActionTable>& tables,
                              const ActionVector& true_action);

// Surrogate objective whose logits-gradient reproduces g as constants:
// J = (1 / (T K C)) sum_t sum_kc g_tkc phi_tkc.
double surrogate_loss(const std::vector<Eigen::MatrixXd>& g,
                      const std::vector<PolicyLogits>& logits_seq);

// Evaluates joint actions at timestep t, returning one value per action.
// Backed by the critic during training and by exact action values in tests.
using PseudoValueFn =
    std::function<std::vector<double>(int t, const std::vector<ActionVector>&)>;

struct CarsmGradient {
  approx::ParameterGradient ascent_grad;  // of J + coef * mean_t entropy
  double surrogate = 0.0;
  std::vector<Eigen::MatrixXd> g;  // per-timestep K x C coefficients
  long active_rows = 0;            // (t, k) pairs that were not shut down
};

// Assembles the policy-gradient estimate for one collected trajectory. The
// logits are recomputed from states in one batched pass (the policy has not
// changed since collection), the per-timestep tables and coefficients are
// independent and run through for_each_index, and a single batched backward
// maps d/dphi into parameter space.
CarsmGradient carsm_gradient(const approx::Mlp& policy_net,
                             const std::vector<Eigen::VectorXd>& states,
                             const std::vector<DirichletMatrix>& dirichlets,
                             const std::vector<double>& y_on,
                             const PseudoValueFn& pseudo_values,
                             int n_choices, double entropy_coef,
                             ExecMode mode = ExecMode::serial);

struct ArsmMcGradient {
  approx::ParameterGradient ascent_grad;
  double surrogate = 0.0;
  long rollouts = 0;        // pseudo-rollouts performed this update
  long rollout_steps = 0;   // environment steps consumed by those rollouts
  int evaluated_from = 0;   // first timestep whose coefficients were kept
};

/// Critic-free variant: pseudo-action values come from Monte-Carlo rollouts
// that restore the stored snapshot, take the pseudo-action, then follow the
// current policy to termination. At most rollout_budget rollouts are spent
// per update; when the trajectory needs more, the oldest timesteps are
// dropped entirely (their coefficients are zero) and only the most recent
// ones are evaluated.
ArsmMcGradient arsm_mc_gradient(const approx::Mlp& policy_net,
                                const envs::Env& env,
                                const std::vector<Eigen::VectorXd>& states,
                                const std::vector<DirichletMatrix>& dirichlets,
                                const std::vector<envs::EnvState>& snapshots,
                                const std::vector<double>& y_on, double gamma,
                                double entropy_coef, int rollout_budget,
                                Rng& rng);

}  // namespace carsm::arsm
