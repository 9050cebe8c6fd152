#include "carsm/toy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "carsm/arsm.hpp"
#include "carsm/mlp.hpp"
#include "carsm/policy.hpp"
#include "carsm/stats.hpp"

namespace carsm::toy {

namespace {

int nearest_grid_index(double a, int n_choices) {
  const double pos = (a + 1.0) * (n_choices - 1) / 2.0;
  const int idx = static_cast<int>(std::lround(pos));
  return std::min(std::max(idx, 0), n_choices - 1);
}

double grid_step(int n_choices) { return 2.0 / (n_choices - 1); }

double left_optimum(const envs::BanditConfig& cfg) {
  return (cfg.m - 1.0) / 2.0;
}

double right_optimum(const envs::BanditConfig& cfg) {
  return (1.0 + cfg.m) / 2.0;
}

TrialResult classify(double mass_global, double mass_inferior) {
  TrialResult res;
  res.mass_global = mass_global;
  res.mass_inferior = mass_inferior;
  res.global = mass_global > 0.5;
  res.inferior = mass_inferior > 0.5;
  return res;
}

}  // namespace

int global_arm_index(const ToyConfig& cfg) {
  return nearest_grid_index(left_optimum(cfg.bandit), cfg.n_choices);
}

int inferior_arm_index(const ToyConfig& cfg) {
  return nearest_grid_index(right_optimum(cfg.bandit), cfg.n_choices);
}

TrialResult discrete_trial(const ToyConfig& cfg, uint64_t trial_seed,
                           Eigen::MatrixXd* density_accum) {
  const int n = cfg.n_choices;
  const long iters = cfg.total_samples / cfg.samples_per_iter;
  Rng rng(trial_seed);

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  approx::AdamState adam = approx::adam_init(n, cfg.lr_discrete);

  for (long it = 0; it < iters; ++it) {
    const double frac = 1.0 - static_cast<double>(it) / iters;
    const double alpha = cfg.alpha0 * frac * frac;

    const Eigen::MatrixXd logits = phi.transpose();
    // Row it is the policy in force while iteration it collects samples.
    if (density_accum)
      density_accum->row(it) += policy::action_probs(logits).row(0);

    Eigen::VectorXd g_mean = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < cfg.samples_per_iter; ++s) {
      const policy::DirichletMatrix dir = policy::sample_dirichlet(1, n, rng);
      std::vector<arsm::PseudoActionTable> tables = {
          arsm::pseudo_table(phi, dir.row(0).transpose())};
      const policy::ActionVector true_action = {tables[0](0, 0)};
      const arsm::JointPseudoSet set =
          arsm::joint_pseudo_set(tables, true_action);

      const double y_true = envs::bandit_reward(
          cfg.bandit, envs::discretize_action(true_action[0], n), rng);
      std::vector<double> values(set.actions.size());
      for (size_t i = 0; i < set.actions.size(); ++i)
        values[i] = envs::bandit_reward(
            cfg.bandit, envs::discretize_action(set.actions[i][0], n), rng);

      const Eigen::MatrixXd f = arsm::f_matrix(set, values, y_true, n);
      g_mean += arsm::g_tensor_step(f, dir, tables, true_action).row(0);
    }
    g_mean /= static_cast<double>(cfg.samples_per_iter);

    const Eigen::VectorXd ascent =
        g_mean + alpha * policy::entropy_grad(logits).row(0).transpose();
    adam_step(adam, phi, -ascent);
  }

  const Eigen::VectorXd probs =
      policy::action_probs(phi.transpose()).row(0).transpose();
  const double h = grid_step(n);
  double mass_global = 0.0, mass_inferior = 0.0;
  for (int c = 0; c < n; ++c) {
    const double a = envs::discretize_action(c, n);
    if (std::abs(a - left_optimum(cfg.bandit)) <= h + 1e-12)
      mass_global += probs(c);
    if (std::abs(a - right_optimum(cfg.bandit)) <= h + 1e-12)
      mass_inferior += probs(c);
  }
  return classify(mass_global, mass_inferior);
}

TrialResult gaussian_trial(const ToyConfig& cfg, uint64_t trial_seed,
                           Eigen::MatrixXd* density_accum) {
  const int n = cfg.n_choices;
  const long iters = cfg.total_samples / cfg.samples_per_iter;
  Rng rng(trial_seed);

  Eigen::VectorXd params(2);  // mu, sigma
  params << cfg.bandit.m, cfg.sigma_init;
  approx::AdamState adam = approx::adam_init(2, cfg.lr_gaussian);

  for (long it = 0; it < iters; ++it) {
    const double frac = 1.0 - static_cast<double>(it) / iters;
    const double alpha = cfg.alpha0 * frac * frac;
    const double mu = params(0), sigma = params(1);

    if (density_accum) {
      // Mass per grid cell for the policy in force this iteration; the
      // outer cells absorb the tails.
      const double h = grid_step(n);
      for (int c = 0; c < n; ++c) {
        const double a = envs::discretize_action(c, n);
        const double lo =
            c == 0 ? -std::numeric_limits<double>::infinity() : a - h / 2.0;
        const double hi =
            c == n - 1 ? std::numeric_limits<double>::infinity() : a + h / 2.0;
        (*density_accum)(it, c) += stats::normal_cdf((hi - mu) / sigma) -
                                   stats::normal_cdf((lo - mu) / sigma);
      }
    }

    // Reparametrized gradient of the expected mean reward: a = mu + sigma e,
    // d/dmu = r'(a), d/dsigma = r'(a) e, averaged over the batch. The
    // entropy bonus contributes alpha / sigma to the sigma component.
    double g_mu = 0.0, g_sigma = 0.0;
    for (int s = 0; s < cfg.samples_per_iter; ++s) {
      const double eps = rng.normal();
      const double a = mu + sigma * eps;
      const double slope = envs::bandit_mean_reward_grad(cfg.bandit, a);
      g_mu += slope;
      g_sigma += slope * eps;
    }
    g_mu /= cfg.samples_per_iter;
    g_sigma = g_sigma / cfg.samples_per_iter + alpha / sigma;

    Eigen::VectorXd ascent(2);
    ascent << g_mu, g_sigma;
    adam_step(adam, params, -ascent);
    params(1) = std::max(params(1), cfg.sigma_floor);
  }

  const double mu = params(0), sigma = params(1);
  const double h = grid_step(n);
  const auto window_mass = [&](double center) {
    return stats::normal_cdf((center + h - mu) / sigma) -
           stats::normal_cdf((center - h - mu) / sigma);
  };
  return classify(window_mass(left_optimum(cfg.bandit)),
                  window_mass(right_optimum(cfg.bandit)));
}

ToyRun toy_run(const ToyConfig& cfg, const std::string& policy, int trials,
               ExecMode mode) {
  if (policy != "discrete" && policy != "gaussian")
    throw std::invalid_argument("toy_run: policy must be discrete|gaussian");
  const bool discrete = policy == "discrete";
  const long iters = cfg.total_samples / cfg.samples_per_iter;

  std::vector<TrialResult> results(trials);
  std::vector<Eigen::MatrixXd> densities(trials);
  const Rng base(cfg.seed);

  for_each_index(trials, mode, [&](int64_t i) {
    densities[i] = Eigen::MatrixXd::Zero(iters, cfg.n_choices);
    Rng child = base.fork(3000 + static_cast<uint64_t>(i));
    results[i] = discrete
                     ? discrete_trial(cfg, child.next_u64(), &densities[i])
                     : gaussian_trial(cfg, child.next_u64(), &densities[i]);
  });

  ToyRun run;
  run.trials = trials;
  run.density = Eigen::MatrixXd::Zero(iters, cfg.n_choices);
  for (int i = 0; i < trials; ++i) {
    run.density += densities[i];
    if (results[i].global)
      run.global_count += 1;
    else if (results[i].inferior)
      run.inferior_count += 1;
    else
      run.undecided_count += 1;
  }
  if (trials > 0) run.density /= static_cast<double>(trials);
  return run;
}

}  // namespace carsm::toy
