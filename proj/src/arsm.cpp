#include "carsm/arsm.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace carsm::arsm {

namespace {

struct Cand {
  double value;
  int index;
};

// Ties resolve to the lowest index, matching policy::argmin_index exactly.
inline bool lex_less(const Cand& a, const Cand& b) {
  return a.value < b.value || (a.value == b.value && a.index < b.index);
}

}  // namespace

PseudoActionTable pseudo_table(const Eigen::VectorXd& logits_row,
                               const Eigen::VectorXd& dir_row) {
  const int n = static_cast<int>(logits_row.size());
  if (dir_row.size() != n)
    throw std::invalid_argument("pseudo_table: shape mismatch");
  if (n < 1) throw std::invalid_argument("pseudo_table: empty row");

  Eigen::VectorXd log_dir = dir_row.array().log();
  Eigen::VectorXd z = log_dir - logits_row;

  // Three smallest entries of z in (value, index) order. Any swap pair
  // excludes at most two indices, so the best untouched entry is among them.
  Cand top[3] = {{0.0, -1}, {0.0, -1}, {0.0, -1}};
  int filled = 0;
  for (int i = 0; i < n; ++i) {
    Cand c{z(i), i};
    for (int s = 0; s < 3; ++s) {
      if (s >= filled || lex_less(c, top[s])) {
        for (int u = std::min(filled, 2); u > s; --u) top[u] = top[u - 1];
        top[s] = c;
        filled = std::min(filled + 1, 3);
        break;
      }
    }
  }
  const int true_action = top[0].index;

  PseudoActionTable table(n, n);
  table.setConstant(true_action);
  for (int c = 1; c < n; ++c) {
    for (int j = 0; j < c; ++j) {
      Cand best{log_dir(j) - logits_row(c), c};
      Cand swapped_j{log_dir(c) - logits_row(j), j};
      if (lex_less(swapped_j, best)) best = swapped_j;
      for (int s = 0; s < filled; ++s) {
        if (top[s].index != c && top[s].index != j) {
          if (lex_less(top[s], best)) best = top[s];
          break;
        }
      }
      table(c, j) = best.index;
      table(j, c) = best.index;
    }
  }
  return table;
}

JointPseudoSet joint_pseudo_set(const std::vector<PseudoActionTable>& tables,
                                const ActionVector& true_action) {
  if (tables.empty())
    throw std::invalid_argument("joint_pseudo_set: no dimensions");
  const int k_dims = static_cast<int>(tables.size());
  if (static_cast<int>(true_action.size()) != k_dims)
    throw std::invalid_argument("joint_pseudo_set: action length mismatch");
  const int n = static_cast<int>(tables[0].rows());

  JointPseudoSet set;
  set.member = Eigen::MatrixXi::Constant(n, n, -1);

  if (k_dims == 1) {
    // Single dimension: dedup with a direct action -> member lookup.
    std::vector<int> index_of(n, -1);
    for (int c = 1; c < n; ++c) {
      for (int j = 0; j < c; ++j) {
        const int a = tables[0](c, j);
        if (a == true_action[0]) continue;
        if (index_of[a] < 0) {
          index_of[a] = static_cast<int>(set.actions.size());
          set.actions.push_back({a});
        }
        set.member(c, j) = index_of[a];
        set.member(j, c) = index_of[a];
      }
    }
    return set;
  }

  std::map<ActionVector, int> seen;
  ActionVector joint(k_dims);
  for (int c = 1; c < n; ++c) {
    for (int j = 0; j < c; ++j) {
      for (int k = 0; k < k_dims; ++k) joint[k] = tables[k](c, j);
      if (joint == true_action) continue;
      auto [it, inserted] =
          seen.emplace(joint, static_cast<int>(set.actions.size()));
      if (inserted) set.actions.push_back(joint);
      set.member(c, j) = it->second;
      set.member(j, c) = it->second;
    }
  }
  return set;
}

Eigen::MatrixXd f_matrix(const JointPseudoSet& set,
                         const std::vector<double>& pseudo_values,
                         double y_true, int n_choices) {
  if (pseudo_values.size() != set.actions.size())
    throw std::invalid_argument("f_matrix: value count mismatch");
  Eigen::MatrixXd f(n_choices, n_choices);
  for (int c = 0; c < n_choices; ++c) {
    for (int j = 0; j < n_choices; ++j) {
      const int idx = set.member(c, j);
      f(c, j) = idx < 0 ? y_true : pseudo_values[idx];
    }
  }
  return f;
}

Eigen::MatrixXd g_tensor_step(const Eigen::MatrixXd& f,
                              const DirichletMatrix& dir,
                              const std::vector<PseudoActionTable>& tables,
                              const ActionVector& true_action) {
  const int n = static_cast<int>(f.rows());
  const int k_dims = static_cast<int>(dir.rows());
  if (f.cols() != n || dir.cols() != n ||
      static_cast<int>(tables.size()) != k_dims)
    throw std::invalid_argument("g_tensor_step: shape mismatch");

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k_dims, n);
  const Eigen::RowVectorXd col_mean = f.colwise().mean();
  const Eigen::MatrixXd centered = f.rowwise() - col_mean;
  for (int k = 0; k < k_dims; ++k) {
    bool active = false;
    for (int c = 0; c < n && !active; ++c)
      for (int j = 0; j < n; ++j)
        if (tables[k](c, j) != true_action[k]) {
          active = true;
          break;
        }
    if (!active) continue;  // dimension shutdown: exact zero row
    const Eigen::VectorXd w =
        (1.0 / n - dir.row(k).array()).matrix().transpose();
    g.row(k) = (centered * w).transpose();
  }
  return g;
}

double surrogate_loss(const std::vector<Eigen::MatrixXd>& g,
                      const std::vector<PolicyLogits>& logits_seq) {
  if (g.size() != logits_seq.size())
    throw std::invalid_argument("surrogate_loss: length mismatch");
  if (g.empty()) return 0.0;
  const double scale = 1.0 / (static_cast<double>(g.size()) * g[0].size());
  double total = 0.0;
  for (size_t t = 0; t < g.size(); ++t)
    total += g[t].cwiseProduct(logits_seq[t]).sum();
  return scale * total;
}

CarsmGradient carsm_gradient(const approx::Mlp& policy_net,
                             const std::vector<Eigen::VectorXd>& states,
                             const std::vector<DirichletMatrix>& dirichlets,
                             const std::vector<double>& y_on,
                             const PseudoValueFn& pseudo_values,
                             int n_choices, double entropy_coef,
                             ExecMode mode) {
  const int horizon = static_cast<int>(states.size());
  if (dirichlets.size() != states.size() || y_on.size() != states.size())
    throw std::invalid_argument("carsm_gradient: trajectory length mismatch");

  CarsmGradient res;
  if (horizon == 0) {
    res.ascent_grad = Eigen::VectorXd::Zero(param_count(policy_net));
    return res;
  }
  const int k_dims = static_cast<int>(dirichlets[0].rows());
  const int n = n_choices;
  if (policy_net.out_dim() != k_dims * n)
    throw std::invalid_argument("carsm_gradient: network output mismatch");

  Eigen::MatrixXd inputs(policy_net.in_dim(), horizon);
  for (int t = 0; t < horizon; ++t) inputs.col(t) = states[t];
  const approx::ForwardTrace trace = mlp_forward_trace(policy_net, inputs);

  res.g.resize(horizon);
  Eigen::MatrixXd out_grad(k_dims * n, horizon);
  std::vector<long> active(horizon, 0);
  const double scale =
      1.0 / (static_cast<double>(horizon) * k_dims * n);

  for_each_index(horizon, mode, [&](int64_t t) {
    const PolicyLogits logits =
        policy::logits_from_flat(trace.output().col(t), k_dims, n);
    std::vector<PseudoActionTable> tables(k_dims);
    ActionVector true_action(k_dims);
    // Diagonal cells of each table hold the true action for that dimension.
    for (int k = 0; k < k_dims; ++k) {
      tables[k] =
          pseudo_table(logits.row(k), dirichlets[t].row(k).transpose());
      true_action[k] = tables[k](0, 0);
    }

    const JointPseudoSet set = joint_pseudo_set(tables, true_action);
    const std::vector<double> values =
        pseudo_values(static_cast<int>(t), set.actions);
    const Eigen::MatrixXd f = f_matrix(set, values, y_on[t], n);
    res.g[t] = g_tensor_step(f, dirichlets[t], tables, true_action);

    for (int k = 0; k < k_dims; ++k)
      if (!res.g[t].row(k).isZero(0.0)) active[t] += 1;

    Eigen::MatrixXd dphi = scale * res.g[t];
    if (entropy_coef != 0.0)
      dphi += (entropy_coef / horizon) * policy::entropy_grad(logits);
    out_grad.col(t) = policy::flat_from_logits(dphi);
  });

  for (int t = 0; t < horizon; ++t) {
    const PolicyLogits logits =
        policy::logits_from_flat(trace.output().col(t), k_dims, n);
    res.surrogate += res.g[t].cwiseProduct(logits).sum();
    res.active_rows += active[t];
  }
  res.surrogate *= scale;

  res.ascent_grad = mlp_backward(policy_net, trace, out_grad).param_grad;
  return res;
}

namespace {

// Discounted return of: restore the snapshot, take first_action, then follow
// the policy until the episode ends.
double pseudo_rollout(const approx::Mlp& policy_net, const envs::Env& env,
                      const envs::EnvState& snapshot,
                      const ActionVector& first_action, int k_dims, int n,
                      double gamma, Rng& rng, long* steps) {
  auto sim = env.clone();
  sim->restore(snapshot);
  envs::StepResult r = sim->step(first_action);
  *steps += 1;
  double value = r.reward;
  double discount = gamma;
  while (!r.done) {
    const PolicyLogits logits = policy::logits_from_flat(
        mlp_forward(policy_net, r.next_obs), k_dims, n);
    const DirichletMatrix dir = policy::sample_dirichlet(k_dims, n, rng);
    r = sim->step(policy::select_action(logits, dir));
    *steps += 1;
    value += discount * r.reward;
    discount *= gamma;
  }
  return value;
}

}  // namespace

ArsmMcGradient arsm_mc_gradient(const approx::Mlp& policy_net,
                                const envs::Env& env,
                                const std::vector<Eigen::VectorXd>& states,
                                const std::vector<DirichletMatrix>& dirichlets,
                                const std::vector<envs::EnvState>& snapshots,
                                const std::vector<double>& y_on, double gamma,
                                double entropy_coef, int rollout_budget,
                                Rng& rng) {
  const int horizon = static_cast<int>(states.size());
  if (dirichlets.size() != states.size() ||
      snapshots.size() != states.size() || y_on.size() != states.size())
    throw std::invalid_argument("arsm_mc_gradient: trajectory mismatch");

  ArsmMcGradient res;
  if (horizon == 0) {
    res.ascent_grad = Eigen::VectorXd::Zero(param_count(policy_net));
    return res;
  }
  const int k_dims = static_cast<int>(dirichlets[0].rows());
  const int n = static_cast<int>(dirichlets[0].cols());

  Eigen::MatrixXd inputs(policy_net.in_dim(), horizon);
  for (int t = 0; t < horizon; ++t) inputs.col(t) = states[t];
  const approx::ForwardTrace trace = mlp_forward_trace(policy_net, inputs);

  // Work out, newest timestep first, how far the rollout budget reaches.
  std::vector<std::vector<PseudoActionTable>> all_tables(horizon);
  std::vector<JointPseudoSet> sets(horizon);
  std::vector<ActionVector> true_actions(horizon);
  long planned = 0;
  int from = horizon;
  for (int t = horizon - 1; t >= 0; --t) {
    const PolicyLogits logits =
        policy::logits_from_flat(trace.output().col(t), k_dims, n);
    std::vector<PseudoActionTable> tables(k_dims);
    ActionVector true_action(k_dims);
    for (int k = 0; k < k_dims; ++k) {
      tables[k] =
          pseudo_table(logits.row(k), dirichlets[t].row(k).transpose());
      true_action[k] = tables[k](0, 0);
    }
    JointPseudoSet set = joint_pseudo_set(tables, true_action);
    const long need = static_cast<long>(set.actions.size());
    if (planned + need > rollout_budget) break;
    planned += need;
    from = t;
    all_tables[t] = std::move(tables);
    sets[t] = std::move(set);
    true_actions[t] = std::move(true_action);
  }
  res.evaluated_from = from;

  std::vector<Eigen::MatrixXd> g(horizon,
                                 Eigen::MatrixXd::Zero(k_dims, n));
  Eigen::MatrixXd out_grad(k_dims * n, horizon);
  const double scale =
      1.0 / (static_cast<double>(horizon) * k_dims * n);
  // Rollouts consume the shared noise stream in timestep order, which keeps
  // the whole update deterministic for a given rng state.
  for (int t = from; t < horizon; ++t) {
    std::vector<double> values(sets[t].actions.size());
    for (size_t i = 0; i < sets[t].actions.size(); ++i) {
      values[i] =
          pseudo_rollout(policy_net, env, snapshots[t], sets[t].actions[i],
                         k_dims, n, gamma, rng, &res.rollout_steps);
      res.rollouts += 1;
    }
    const Eigen::MatrixXd f = f_matrix(sets[t], values, y_on[t], n);
    g[t] = g_tensor_step(f, dirichlets[t], all_tables[t], true_actions[t]);
  }

  std::vector<PolicyLogits> logits_seq(horizon);
  for (int t = 0; t < horizon; ++t) {
    logits_seq[t] =
        policy::logits_from_flat(trace.output().col(t), k_dims, n);
    Eigen::MatrixXd dphi = scale * g[t];
    if (entropy_coef != 0.0)
      dphi += (entropy_coef / horizon) * policy::entropy_grad(logits_seq[t]);
    out_grad.col(t) = policy::flat_from_logits(dphi);
  }
  res.surrogate = surrogate_loss(g, logits_seq);
  res.ascent_grad = mlp_backward(policy_net, trace, out_grad).param_grad;
  return res;
}

}  // namespace carsm::arsm
