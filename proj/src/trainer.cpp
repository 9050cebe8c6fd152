#include "carsm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "carsm/arsm.hpp"
#include "carsm/baselines.hpp"
#include "json.hpp"

namespace carsm::trainer {

namespace {

bool known_algo(const std::string& a) {
  return a == "carsm" || a == "a2c" || a == "arsm-mc" || a == "trpo" ||
         a == "trpo-carsm";
}

// Seed streams for the independent random sources of one run.
enum Stream : uint64_t {
  kEnvStream = 1,
  kPolicyInit = 2,
  kCriticInit = 3,
  kCollect = 4,
  kCriticSampling = 5,
  kRollouts = 6,
  kValueInit = 7,
};

uint64_t stream_seed(const RunConfig& cfg, uint64_t stream) {
  return Rng(cfg.seed).fork(stream).next_u64();
}

std::vector<int> policy_sizes(const RunConfig& cfg, int obs, int k, int c) {
  std::vector<int> sizes = {obs};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(k * c);
  return sizes;
}

std::vector<int> scalar_sizes(const RunConfig& cfg, int in) {
  std::vector<int> sizes = {in};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  return sizes;
}

// Shared per-episode bookkeeping: moving average, early stop, abort checks.
class EpisodeLogger {
 public:
  explicit EpisodeLogger(const RunConfig& cfg, TrainResult& result)
      : cfg_(cfg), result_(result) {}

  // Returns true when training should stop (threshold reached).
  bool log(double ret, double alpha, double critic_loss, long step_increment) {
    window_.push_back(ret);
    window_sum_ += ret;
    if (window_.size() > 100) {
      window_sum_ -= window_.front();
      window_.erase(window_.begin());
    }
    steps_ += step_increment;
    EpisodeRow row;
    row.episode = static_cast<int>(result_.rows.size()) + 1;
    row.timesteps = steps_;
    row.ret = ret;
    row.avg100 = window_sum_ / static_cast<double>(window_.size());
    row.alpha = alpha;
    row.critic_loss = critic_loss;
    result_.rows.push_back(row);

    return cfg_.stop_threshold && window_.size() == 100 &&
           row.avg100 >= *cfg_.stop_threshold;
  }

 private:
  const RunConfig& cfg_;
  TrainResult& result_;
  std::vector<double> window_;
  double window_sum_ = 0.0;
  long steps_ = 0;
};

bool abort_if_nonfinite(TrainResult& result, double value, int episode,
                        const char* what) {
  if (std::isfinite(value)) return false;
  result.aborted = true;
  result.abort_reason = std::string(what) + " became non-finite at episode " +
                        std::to_string(episode);
  return true;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

}  // namespace

void resolve_defaults(RunConfig& cfg) {
  if (std::isnan(cfg.lr_policy))
    cfg.lr_policy = cfg.algo == "a2c" ? 3e-4 : 0.01;
  if (std::isnan(cfg.lr_critic))
    cfg.lr_critic = cfg.algo == "a2c" ? cfg.lr_policy : 0.01;
}

double Trajectory::episode_return() const {
  double total = 0.0;
  for (double r : rewards) total += r;
  return total;
}

Trajectory collect_episode(envs::Env& env, const approx::Mlp& policy_net,
                           Rng& rng, critic::ReplayBuffer* buffer,
                           bool with_snapshots) {
  const int k_dims = env.action_dims();
  const int n = env.choices_per_dim();
  Trajectory traj;
  Eigen::VectorXd obs = env.reset();
  while (true) {
    const policy::PolicyLogits logits = policy::logits_from_flat(
        mlp_forward(policy_net, obs), k_dims, n);
    const policy::DirichletMatrix dir =
        policy::sample_dirichlet(k_dims, n, rng);
    const policy::ActionVector action = policy::select_action(logits, dir);
    if (with_snapshots) traj.snapshots.push_back(env.snapshot());

    const envs::StepResult r = env.step(action);
    traj.states.push_back(obs);
    traj.dirichlets.push_back(dir);
    traj.logits.push_back(logits);
    traj.actions.push_back(action);
    traj.rewards.push_back(r.reward);
    traj.dones.push_back(r.done ? 1 : 0);
    if (buffer)
      buffer->push({obs, action, r.reward, r.next_obs, r.done});

    obs = r.next_obs;
    if (r.done) break;
  }
  traj.final_state = obs;
  traj.final_done = true;
  return traj;
}

int TrainResult::episodes_to(double threshold, int window) const {
  double sum = 0.0;
  for (size_t i = 0; i < rows.size(); ++i) {
    sum += rows[i].ret;
    if (i >= static_cast<size_t>(window)) sum -= rows[i - window].ret;
    if (i + 1 >= static_cast<size_t>(window) &&
        sum / window >= threshold)
      return rows[i].episode;
  }
  return -1;
}

namespace {

TrainResult train_carsm_like(const RunConfig& cfg, bool trust_region) {
  TrainResult result;
  auto env = envs::make_env(cfg.env, cfg.n_choices, stream_seed(cfg, kEnvStream));
  const int k_dims = env->action_dims();
  const int n = env->choices_per_dim();
  const int obs = env->obs_dim();

  approx::Mlp policy = approx::mlp_init(policy_sizes(cfg, obs, k_dims, n),
                                        stream_seed(cfg, kPolicyInit));
  approx::Mlp critic = approx::mlp_init(scalar_sizes(cfg, obs + k_dims),
                                        stream_seed(cfg, kCriticInit));
  critic::TargetNets targets{policy, critic};
  approx::AdamState policy_adam =
      approx::adam_init(param_count(policy), cfg.lr_policy);
  approx::AdamState critic_adam =
      approx::adam_init(param_count(critic), cfg.lr_critic);
  critic::ReplayBuffer buffer(cfg.replay_capacity);

  Rng collect_rng = Rng(cfg.seed).fork(kCollect);
  Rng critic_rng = Rng(cfg.seed).fork(kCriticSampling);

  EpisodeLogger logger(cfg, result);
  double alpha = cfg.alpha0;
  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    const Trajectory traj =
        collect_episode(*env, policy, collect_rng, &buffer, false);
    result.env_steps += traj.length();
    const std::vector<double> y_on =
        critic::on_policy_targets(traj.rewards, cfg.gamma);

    const std::vector<double> losses = critic::critic_update(
        critic, critic_adam, buffer, traj.states, traj.actions, y_on, targets,
        cfg.gamma, n, cfg.n_critic, cfg.expectation_samples, critic_rng);

    const arsm::PseudoValueFn values =
        [&](int t, const std::vector<policy::ActionVector>& acts) {
          const std::vector<Eigen::VectorXd> ss(acts.size(), traj.states[t]);
          return critic::critic_eval_batch(critic, ss, acts, n);
        };
    const arsm::CarsmGradient grad =
        arsm::carsm_gradient(policy, traj.states, traj.dirichlets, y_on,
                             values, n, alpha, ExecMode::parallel);

    if (trust_region) {
      const trpo::TrpoStepResult step = trpo::trpo_step(
          policy, grad.ascent_grad, traj.states, k_dims, n, cfg.trpo);
      if (step.accepted) result.accepted_kls.push_back(step.kl);
    } else {
      Eigen::VectorXd params = approx::flatten(policy);
      approx::adam_step(policy_adam, params, -grad.ascent_grad);
      approx::unflatten(policy, params);
    }

    critic::soft_update(targets, policy, critic, cfg.tau);

    const double ret = traj.episode_return();
    const double critic_loss = mean_of(losses);
    const bool stop =
        logger.log(ret, alpha, critic_loss, traj.length());
    if (abort_if_nonfinite(result, grad.surrogate, ep, "surrogate loss") ||
        abort_if_nonfinite(result, critic_loss, ep, "critic loss") ||
        abort_if_nonfinite(result, ret, ep, "episode return"))
      break;
    alpha *= cfg.alpha_decay;
    if (stop) break;
  }
  return result;
}

TrainResult train_a2c(const RunConfig& cfg) {
  TrainResult result;
  auto env = envs::make_env(cfg.env, cfg.n_choices, stream_seed(cfg, kEnvStream));
  const int k_dims = env->action_dims();
  const int n = env->choices_per_dim();
  const int obs = env->obs_dim();

  approx::Mlp policy = approx::mlp_init(policy_sizes(cfg, obs, k_dims, n),
                                        stream_seed(cfg, kPolicyInit));
  approx::Mlp value = approx::mlp_init(scalar_sizes(cfg, obs),
                                       stream_seed(cfg, kValueInit));
  approx::AdamState policy_adam =
      approx::adam_init(param_count(policy), cfg.lr_policy);
  approx::AdamState value_adam =
      approx::adam_init(param_count(value), cfg.lr_critic);
  Rng collect_rng = Rng(cfg.seed).fork(kCollect);

  const baselines::GaeConfig gae_cfg{cfg.gamma, cfg.gae_lambda,
                                     cfg.gae_normalize};
  EpisodeLogger logger(cfg, result);
  double alpha = cfg.alpha0;
  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    Trajectory traj =
        collect_episode(*env, policy, collect_rng, nullptr, false);
    result.env_steps += traj.length();

    const baselines::A2cLosses losses = baselines::a2c_update(
        policy, policy_adam, value, value_adam, traj.states, traj.actions,
        traj.rewards, traj.dones, traj.final_state, n, gae_cfg,
        cfg.value_coef, alpha, cfg.v_iter);

    const double ret = traj.episode_return();
    const bool stop = logger.log(ret, alpha, losses.value_loss, traj.length());
    if (abort_if_nonfinite(result, losses.total, ep, "a2c loss") ||
        abort_if_nonfinite(result, ret, ep, "episode return"))
      break;
    alpha *= cfg.alpha_decay;
    if (stop) break;
  }
  return result;
}

TrainResult train_arsm_mc(const RunConfig& cfg) {
  TrainResult result;
  auto env = envs::make_env(cfg.env, cfg.n_choices, stream_seed(cfg, kEnvStream));
  const int k_dims = env->action_dims();
  const int n = env->choices_per_dim();
  const int obs = env->obs_dim();

  approx::Mlp policy = approx::mlp_init(policy_sizes(cfg, obs, k_dims, n),
                                        stream_seed(cfg, kPolicyInit));
  approx::AdamState policy_adam =
      approx::adam_init(param_count(policy), cfg.lr_policy);
  Rng collect_rng = Rng(cfg.seed).fork(kCollect);
  Rng rollout_rng = Rng(cfg.seed).fork(kRollouts);

  EpisodeLogger logger(cfg, result);
  double alpha = cfg.alpha0;
  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    const Trajectory traj =
        collect_episode(*env, policy, collect_rng, nullptr, true);
    result.env_steps += traj.length();
    const std::vector<double> y_on =
        critic::on_policy_targets(traj.rewards, cfg.gamma);

    const arsm::ArsmMcGradient grad = arsm::arsm_mc_gradient(
        policy, *env, traj.states, traj.dirichlets, traj.snapshots, y_on,
        cfg.gamma, alpha, cfg.rollout_budget, rollout_rng);
    result.pseudo_steps += grad.rollout_steps;
    result.max_rollouts_per_update =
        std::max(result.max_rollouts_per_update, grad.rollouts);

    Eigen::VectorXd params = approx::flatten(policy);
    approx::adam_step(policy_adam, params, -grad.ascent_grad);
    approx::unflatten(policy, params);

    const double ret = traj.episode_return();
    const bool stop =
        logger.log(ret, alpha, 0.0, traj.length() + grad.rollout_steps);
    if (abort_if_nonfinite(result, grad.surrogate, ep, "surrogate loss") ||
        abort_if_nonfinite(result, ret, ep, "episode return"))
      break;
    alpha *= cfg.alpha_decay;
    if (stop) break;
  }
  return result;
}

// TRPO with the advantage-actor-critic gradient as its ascent direction.
TrainResult train_trpo_a2c(const RunConfig& cfg) {
  TrainResult result;
  auto env = envs::make_env(cfg.env, cfg.n_choices, stream_seed(cfg, kEnvStream));
  const int k_dims = env->action_dims();
  const int n = env->choices_per_dim();
  const int obs = env->obs_dim();

  approx::Mlp policy = approx::mlp_init(policy_sizes(cfg, obs, k_dims, n),
                                        stream_seed(cfg, kPolicyInit));
  approx::Mlp value = approx::mlp_init(scalar_sizes(cfg, obs),
                                       stream_seed(cfg, kValueInit));
  approx::AdamState value_adam =
      approx::adam_init(param_count(value), cfg.lr_critic);
  Rng collect_rng = Rng(cfg.seed).fork(kCollect);

  const baselines::GaeConfig gae_cfg{cfg.gamma, cfg.gae_lambda,
                                     cfg.gae_normalize};
  EpisodeLogger logger(cfg, result);
  double alpha = cfg.alpha0;
  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    const Trajectory traj =
        collect_episode(*env, policy, collect_rng, nullptr, false);
    result.env_steps += traj.length();
    const int horizon = traj.length();
    const double inv_t = 1.0 / std::max(horizon, 1);

    // Advantages from the current value net.
    Eigen::MatrixXd inputs(obs, horizon);
    for (int t = 0; t < horizon; ++t) inputs.col(t) = traj.states[t];
    Eigen::MatrixXd value_inputs(obs, horizon + 1);
    value_inputs.leftCols(horizon) = inputs;
    value_inputs.col(horizon) = traj.final_state;
    const Eigen::MatrixXd v_all = mlp_forward(value, value_inputs);
    std::vector<double> values(horizon + 1);
    for (int t = 0; t <= horizon; ++t) values[t] = v_all(0, t);
    const std::vector<double> adv =
        baselines::gae(traj.rewards, values, traj.dones, gae_cfg);

    // Ascent gradient of (1/T) sum_t A_t log pi + alpha * mean entropy.
    const approx::ForwardTrace trace = mlp_forward_trace(policy, inputs);
    Eigen::MatrixXd out_grad(policy.out_dim(), horizon);
    for (int t = 0; t < horizon; ++t) {
      const policy::PolicyLogits logits = policy::logits_from_flat(
          trace.output().col(t), k_dims, n);
      out_grad.col(t) = policy::flat_from_logits(
          inv_t * adv[t] * policy::log_prob_grad(logits, traj.actions[t]) +
          alpha * inv_t * policy::entropy_grad(logits));
    }
    const Eigen::VectorXd g =
        mlp_backward(policy, trace, out_grad).param_grad;

    const trpo::TrpoStepResult step =
        trpo::trpo_step(policy, g, traj.states, k_dims, n, cfg.trpo);
    if (step.accepted) result.accepted_kls.push_back(step.kl);

    // Value regression on the on-policy returns, v_iter steps.
    const std::vector<double> y_on =
        critic::on_policy_targets(traj.rewards, cfg.gamma);
    double value_loss = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const double r = y_on[t] - values[t];
      value_loss += r * r;
    }
    value_loss *= inv_t;
    Eigen::VectorXd value_params = approx::flatten(value);
    for (int it = 0; it < cfg.v_iter; ++it) {
      const approx::ForwardTrace vtrace = mlp_forward_trace(value, inputs);
      Eigen::MatrixXd residual =
          vtrace.output().row(0) -
          Eigen::Map<const Eigen::VectorXd>(y_on.data(), horizon).transpose();
      approx::adam_step(
          value_adam, value_params,
          mlp_backward(value, vtrace,
                       (2.0 * cfg.value_coef * inv_t) * residual)
              .param_grad);
      approx::unflatten(value, value_params);
    }

    const double ret = traj.episode_return();
    const bool stop = logger.log(ret, alpha, value_loss, traj.length());
    if (abort_if_nonfinite(result, value_loss, ep, "value loss") ||
        abort_if_nonfinite(result, ret, ep, "episode return"))
      break;
    alpha *= cfg.alpha_decay;
    if (stop) break;
  }
  return result;
}

}  // namespace

TrainResult train_run(const RunConfig& raw) {
  RunConfig cfg = raw;
  resolve_defaults(cfg);
  if (!known_algo(cfg.algo))
    throw std::invalid_argument("train_run: unknown algorithm " + cfg.algo);

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  if (cfg.algo == "carsm") {
    result = train_carsm_like(cfg, false);
  } else if (cfg.algo == "trpo-carsm") {
    result = train_carsm_like(cfg, true);
  } else if (cfg.algo == "a2c") {
    result = train_a2c(cfg);
  } else if (cfg.algo == "arsm-mc") {
    result = train_arsm_mc(cfg);
  } else {
    result = train_trpo_a2c(cfg);
  }
  result.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();

  if (!cfg.out.empty()) {
    write_csv(result, cfg.out);
    write_manifest(cfg, result, cfg.out + ".manifest.json");
  }
  return result;
}

std::string csv_text(const TrainResult& result) {
  std::string text = "episode,timesteps,return,avg100,alpha,critic_loss,wall_ms\n";
  char line[256];
  for (const EpisodeRow& row : result.rows) {
    std::snprintf(line, sizeof(line), "%d,%ld,%.6f,%.6f,%.8f,%.6f,%ld\n",
                  row.episode, row.timesteps, row.ret, row.avg100, row.alpha,
                  row.critic_loss, row.wall_ms);
    text += line;
  }
  return text;
}

void write_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << csv_text(result);
}

void write_manifest(const RunConfig& cfg, const TrainResult& result,
                    const std::string& path) {
  nlohmann::json j;
  j["config"] = {
      {"algo", cfg.algo},
      {"env", cfg.env},
      {"n_choices", cfg.n_choices},
      {"episodes", cfg.episodes},
      {"seed", cfg.seed},
      {"gamma", cfg.gamma},
      {"lr_policy", cfg.lr_policy},
      {"lr_critic", cfg.lr_critic},
      {"n_critic", cfg.n_critic},
      {"tau", cfg.tau},
      {"alpha0", cfg.alpha0},
      {"alpha_decay", cfg.alpha_decay},
      {"expectation_samples", cfg.expectation_samples},
      {"replay_capacity", cfg.replay_capacity},
      {"rollout_budget", cfg.rollout_budget},
      {"v_iter", cfg.v_iter},
      {"value_coef", cfg.value_coef},
      {"gae_lambda", cfg.gae_lambda},
      {"gae_normalize", cfg.gae_normalize},
      {"hidden", cfg.hidden},
      {"trpo",
       {{"delta", cfg.trpo.delta},
        {"damping", cfg.trpo.damping},
        {"cg_iters", cfg.trpo.cg_iters},
        {"cg_tol", cfg.trpo.cg_tol},
        {"backtrack_steps", cfg.trpo.backtrack_steps},
        {"backtrack_ratio", cfg.trpo.backtrack_ratio}}},
      {"out", cfg.out},
  };
  if (cfg.stop_threshold)
    j["config"]["stop_threshold"] = *cfg.stop_threshold;
  j["episodes_run"] = result.rows.size();
  j["env_steps"] = result.env_steps;
  j["pseudo_steps"] = result.pseudo_steps;
  j["max_rollouts_per_update"] = result.max_rollouts_per_update;
  j["accepted_updates"] = result.accepted_kls.size();
  j["aborted"] = result.aborted;
  j["abort_reason"] = result.abort_reason;
  j["final_avg100"] =
      result.rows.empty() ? 0.0 : result.rows.back().avg100;
  j["wall_ms"] = result.wall_ms;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace carsm::trainer
