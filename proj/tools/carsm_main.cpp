#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "carsm/toy.hpp"
#include "carsm/trainer.hpp"
#include "carsm/verify.hpp"
#include "json.hpp"

namespace {

using carsm::ExecMode;
using carsm::Rng;
using carsm::trainer::RunConfig;
using carsm::trainer::TrainResult;

int default_choices(const std::string& env) {
  if (env == "cartpole") return 2;
  if (env == "cartpole-cont") return 101;
  if (env == "acrobot") return 3;
  return 21;  // bandit grid
}

// Values from a JSON config file; flags given on the command line take
// precedence because they are parsed after this is applied.
void config_from_json(const nlohmann::json& j, RunConfig& cfg) {
  cfg.algo = j.value("algo", cfg.algo);
  cfg.env = j.value("env", cfg.env);
  cfg.n_choices = j.value("n_choices", cfg.n_choices);
  cfg.episodes = j.value("episodes", cfg.episodes);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.lr_policy = j.value("lr_policy", cfg.lr_policy);
  cfg.lr_critic = j.value("lr_critic", cfg.lr_critic);
  cfg.n_critic = j.value("n_critic", cfg.n_critic);
  cfg.tau = j.value("tau", cfg.tau);
  cfg.alpha0 = j.value("alpha0", cfg.alpha0);
  cfg.alpha_decay = j.value("alpha_decay", cfg.alpha_decay);
  cfg.expectation_samples =
      j.value("expectation_samples", cfg.expectation_samples);
  cfg.replay_capacity = j.value("replay_capacity", cfg.replay_capacity);
  cfg.rollout_budget = j.value("rollout_budget", cfg.rollout_budget);
  cfg.v_iter = j.value("v_iter", cfg.v_iter);
  cfg.value_coef = j.value("value_coef", cfg.value_coef);
  cfg.gae_lambda = j.value("gae_lambda", cfg.gae_lambda);
  cfg.gae_normalize = j.value("gae_normalize", cfg.gae_normalize);
  cfg.hidden = j.value("hidden", cfg.hidden);
  if (j.contains("trpo")) {
    const nlohmann::json& t = j["trpo"];
    cfg.trpo.delta = t.value("delta", cfg.trpo.delta);
    cfg.trpo.damping = t.value("damping", cfg.trpo.damping);
    cfg.trpo.cg_iters = t.value("cg_iters", cfg.trpo.cg_iters);
    cfg.trpo.cg_tol = t.value("cg_tol", cfg.trpo.cg_tol);
    cfg.trpo.backtrack_steps =
        t.value("backtrack_steps", cfg.trpo.backtrack_steps);
    cfg.trpo.backtrack_ratio =
        t.value("backtrack_ratio", cfg.trpo.backtrack_ratio);
  }
  if (j.contains("stop_threshold") && !j["stop_threshold"].is_null())
    cfg.stop_threshold = j["stop_threshold"].get<double>();
  cfg.out = j.value("out", cfg.out);
}

void attach_run_options(CLI::App* cmd, RunConfig& cfg, std::string& config_path,
                        double& stop_threshold) {
  cmd->add_option("--config", config_path,
                  "JSON config file; flags given here override it");
  cmd->add_option("--algo", cfg.algo,
                  "carsm | a2c | arsm-mc | trpo | trpo-carsm");
  cmd->add_option("--env", cfg.env,
                  "cartpole | cartpole-cont | acrobot | bandit");
  cmd->add_option("--choices", cfg.n_choices,
                  "grid points per action dimension (0 = per-env default)");
  cmd->add_option("--episodes", cfg.episodes, "training episodes");
  cmd->add_option("--gamma", cfg.gamma, "discount factor");
  cmd->add_option("--lr-policy", cfg.lr_policy,
                  "policy learning rate (unset = per-algorithm default)");
  cmd->add_option("--lr-critic", cfg.lr_critic,
                  "critic / value learning rate (unset = default)");
  cmd->add_option("--n-critic", cfg.n_critic, "critic steps per update");
  cmd->add_option("--tau", cfg.tau, "target network soft-update rate");
  cmd->add_option("--alpha0", cfg.alpha0, "initial entropy coefficient");
  cmd->add_option("--alpha-decay", cfg.alpha_decay,
                  "per-episode entropy coefficient decay");
  cmd->add_option("--expectation-samples", cfg.expectation_samples,
                  "samples for the next-state expectation when not enumerable");
  cmd->add_option("--replay-capacity", cfg.replay_capacity,
                  "replay buffer capacity");
  cmd->add_option("--rollout-budget", cfg.rollout_budget,
                  "pseudo-rollout cap per update (arsm-mc)");
  cmd->add_option("--v-iter", cfg.v_iter, "value-net steps per batch");
  cmd->add_option("--value-coef", cfg.value_coef, "value loss weight");
  cmd->add_option("--gae-lambda", cfg.gae_lambda, "GAE lambda");
  cmd->add_flag("!--no-gae-normalize", cfg.gae_normalize,
                "disable advantage normalization");
  cmd->add_option("--hidden", cfg.hidden, "hidden layer sizes");
  cmd->add_option("--delta", cfg.trpo.delta, "trust-region KL bound");
  cmd->add_option("--damping", cfg.trpo.damping, "Fisher damping");
  cmd->add_option("--cg-iters", cfg.trpo.cg_iters,
                  "conjugate-gradient iterations");
  cmd->add_option("--backtrack-steps", cfg.trpo.backtrack_steps,
                  "line-search halvings");
  cmd->add_option("--stop-threshold", stop_threshold,
                  "stop once the 100-episode average reaches this");
  cmd->add_option("--out", cfg.out, "CSV output path");
}

void finalize_config(RunConfig& cfg, double stop_threshold) {
  if (cfg.n_choices <= 0) cfg.n_choices = default_choices(cfg.env);
  if (!std::isnan(stop_threshold)) cfg.stop_threshold = stop_threshold;
}

void print_run_summary(const RunConfig& cfg, const TrainResult& result) {
  const double final_avg =
      result.rows.empty() ? 0.0 : result.rows.back().avg100;
  std::printf("algo=%s env=%s C=%d seed=%llu episodes=%zu\n",
              cfg.algo.c_str(), cfg.env.c_str(), cfg.n_choices,
              static_cast<unsigned long long>(cfg.seed), result.rows.size());
  std::printf("final_avg100=%.3f env_steps=%ld pseudo_steps=%ld wall_ms=%.0f\n",
              final_avg, result.env_steps, result.pseudo_steps,
              result.wall_ms);
  if (result.max_rollouts_per_update > 0)
    std::printf("max_rollouts_per_update=%ld\n",
                result.max_rollouts_per_update);
  if (!result.accepted_kls.empty()) {
    double max_kl = 0.0;
    for (double kl : result.accepted_kls) max_kl = std::max(max_kl, kl);
    std::printf("accepted_updates=%zu max_kl=%.6f\n",
                result.accepted_kls.size(), max_kl);
  }
  if (cfg.stop_threshold) {
    const int at = result.episodes_to(*cfg.stop_threshold);
    std::printf("episodes_to_%.0f=%d\n", *cfg.stop_threshold, at);
  }
  if (result.aborted)
    std::printf("aborted: %s\n", result.abort_reason.c_str());
}

std::string seed_suffixed(const std::string& out, uint64_t seed) {
  const std::string tag = "_s" + std::to_string(seed);
  const size_t dot = out.rfind(".csv");
  if (dot != std::string::npos && dot == out.size() - 4)
    return out.substr(0, dot) + tag + ".csv";
  return out + tag + ".csv";
}

int run_train(RunConfig cfg) {
  const TrainResult result = carsm::trainer::train_run(cfg);
  print_run_summary(cfg, result);
  return result.aborted ? 2 : 0;
}

int run_sweep(RunConfig cfg, const std::vector<uint64_t>& seeds) {
  const std::string out_base = cfg.out;
  int reached = 0;
  for (uint64_t seed : seeds) {
    cfg.seed = seed;
    cfg.out = out_base.empty() ? out_base : seed_suffixed(out_base, seed);
    const TrainResult result = carsm::trainer::train_run(cfg);
    const double final_avg =
        result.rows.empty() ? 0.0 : result.rows.back().avg100;
    int at = -1;
    if (cfg.stop_threshold) {
      at = result.episodes_to(*cfg.stop_threshold);
      if (at >= 0) ++reached;
    }
    std::printf(
        "seed=%llu episodes=%zu final_avg100=%.3f episodes_to=%d%s\n",
        static_cast<unsigned long long>(seed), result.rows.size(), final_avg,
        at, result.aborted ? " (aborted)" : "");
  }
  if (cfg.stop_threshold)
    std::printf("reached_threshold=%d/%zu\n", reached, seeds.size());
  return 0;
}

void write_density_csv(const Eigen::MatrixXd& density,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "iteration,action_index,avg_density\n";
  char line[96];
  for (Eigen::Index it = 0; it < density.rows(); ++it)
    for (Eigen::Index a = 0; a < density.cols(); ++a) {
      std::snprintf(line, sizeof(line), "%ld,%ld,%.8f\n",
                    static_cast<long>(it + 1), static_cast<long>(a),
                    density(it, a));
      out << line;
    }
}

int run_toy(const carsm::toy::ToyConfig& cfg, const std::string& policy,
            int trials, const std::string& out, ExecMode mode) {
  const std::vector<std::string> policies =
      policy == "both" ? std::vector<std::string>{"discrete", "gaussian"}
                       : std::vector<std::string>{policy};
  for (const std::string& p : policies) {
    const carsm::toy::ToyRun run = carsm::toy::toy_run(cfg, p, trials, mode);
    std::printf("%s: global=%d inferior=%d undecided=%d of %d trials\n",
                p.c_str(), run.global_count, run.inferior_count,
                run.undecided_count, run.trials);
    if (!out.empty()) write_density_csv(run.density, out + "_" + p + ".csv");
  }
  return 0;
}

nlohmann::json report_json(const carsm::verify::EstimatorReport& report) {
  nlohmann::json j;
  j["name"] = report.name;
  j["draws"] = report.draws;
  j["seed"] = report.seed;
  j["z_threshold"] = report.z_threshold;
  j["max_abs_z"] = report.max_abs_z;
  j["pass"] = report.pass;
  j["retried"] = report.retried;
  nlohmann::json comps = nlohmann::json::array();
  for (const carsm::verify::ComponentStat& c : report.components)
    comps.push_back(
        {{"mean", c.mean}, {"std_error", c.std_error}, {"z", c.z}});
  j["components"] = comps;
  return j;
}

int run_verify(int k_dims, int n_choices, long draws, uint64_t seed,
               uint64_t spec_seed, double z_threshold, const std::string& out,
               ExecMode mode) {
  Rng spec_rng(spec_seed);
  const carsm::verify::BanditSpec spec =
      carsm::verify::random_bandit_spec(k_dims, n_choices, spec_rng);
  Eigen::MatrixXd logits(k_dims, n_choices);
  for (int k = 0; k < k_dims; ++k)
    for (int c = 0; c < n_choices; ++c) logits(k, c) = spec_rng.normal();

  const Eigen::MatrixXd reference =
      carsm::verify::exact_gradient(spec, logits);
  const carsm::verify::EstimatorReport report =
      carsm::verify::mc_estimator_mean(
          "swap-and-merge gradient",
          [&](Rng& rng) {
            return carsm::verify::arsm_estimate_draw(spec, logits, rng);
          },
          reference, draws, seed, z_threshold, mode);
  std::printf("%s: draws=%ld max|z|=%.3f %s%s\n", report.name.c_str(),
              report.draws, report.max_abs_z,
              report.pass ? "PASS" : "FAIL",
              report.retried ? " (after retry)" : "");

  nlohmann::json j;
  j["gradient"] = report_json(report);
  bool all_pass = report.pass;
  if (k_dims == 1) {
    nlohmann::json baselines = nlohmann::json::array();
    for (int ref = 0; ref < n_choices; ++ref) {
      const carsm::verify::EstimatorReport zr = carsm::verify::zero_baseline_check(
          spec, logits, ref, draws, seed + ref + 1, mode);
      std::printf("zero-baseline j=%d: max|z|=%.3f %s\n", ref, zr.max_abs_z,
                  zr.pass ? "PASS" : "FAIL");
      baselines.push_back(report_json(zr));
      all_pass = all_pass && zr.pass;
    }
    j["zero_baseline"] = baselines;
  }
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + out);
    f << j.dump(2) << "\n";
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Swap-and-merge policy gradients over discrete action grids"};
  app.require_subcommand(1);

  // A config file changes defaults, so it must be read before the flag
  // values land; scan for it up front.
  std::string config_path;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];

  RunConfig cfg;
  cfg.n_choices = 0;  // 0 = pick the per-environment default later
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) {
      std::fprintf(stderr, "cannot open config file %s\n",
                   config_path.c_str());
      return 1;
    }
    nlohmann::json j;
    f >> j;
    config_from_json(j, cfg);
  }
  double stop_threshold = std::numeric_limits<double>::quiet_NaN();

  CLI::App* train = app.add_subcommand("train", "train one run");
  attach_run_options(train, cfg, config_path, stop_threshold);

  CLI::App* sweep =
      app.add_subcommand("sweep", "train the same setup over several seeds");
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  attach_run_options(sweep, cfg, config_path, stop_threshold);
  sweep->add_option("--seeds", seeds, "seeds to run");

  CLI::App* toy = app.add_subcommand(
      "toy", "bimodal bandit: discrete estimator vs Gaussian reparam");
  carsm::toy::ToyConfig toy_cfg;
  std::string toy_policy = "both";
  int toy_trials = 100;
  double toy_m = 0.0;
  std::string toy_out;
  bool toy_serial = false;
  toy->add_option("--policy", toy_policy, "discrete | gaussian | both");
  toy->add_option("--trials", toy_trials, "independent trials");
  toy->add_option("--samples", toy_cfg.total_samples,
                  "true-action reward draws per trial");
  toy->add_option("--samples-per-iter", toy_cfg.samples_per_iter,
                  "draws per update");
  toy->add_option("--choices", toy_cfg.n_choices, "grid points");
  toy->add_option("--m", toy_m, "bandit mode parameter");
  toy->add_option("--alpha0", toy_cfg.alpha0, "initial entropy coefficient");
  toy->add_option("--lr-discrete", toy_cfg.lr_discrete,
                  "discrete policy learning rate");
  toy->add_option("--lr-gaussian", toy_cfg.lr_gaussian,
                  "Gaussian policy learning rate");
  toy->add_option("--seed", toy_cfg.seed, "base seed");
  toy->add_option("--out", toy_out, "density CSV prefix");
  toy->add_flag("--serial", toy_serial, "disable the parallel kernels");

  CLI::App* verify = app.add_subcommand(
      "verify", "Monte-Carlo unbiasedness checks on a random bandit");
  int v_k = 2, v_c = 3;
  long v_draws = 100000;
  uint64_t v_seed = 1, v_spec_seed = 7;
  double v_z = 3.0;
  std::string v_out;
  bool v_serial = false;
  verify->add_option("--k", v_k, "action dimensions");
  verify->add_option("--choices", v_c, "choices per dimension");
  verify->add_option("--draws", v_draws, "Monte-Carlo draws");
  verify->add_option("--seed", v_seed, "draw seed");
  verify->add_option("--spec-seed", v_spec_seed,
                     "seed for the random bandit and logits");
  verify->add_option("--z", v_z, "z threshold");
  verify->add_option("--out", v_out, "JSON report path");
  verify->add_flag("--serial", v_serial, "disable the parallel kernels");

  uint64_t train_seed = cfg.seed;
  train->add_option("--seed", train_seed, "run seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      cfg.seed = train_seed;
      finalize_config(cfg, stop_threshold);
      return run_train(cfg);
    }
    if (*sweep) {
      finalize_config(cfg, stop_threshold);
      return run_sweep(cfg, seeds);
    }
    if (*toy) {
      toy_cfg.bandit = carsm::envs::bandit_config_for(toy_m);
      return run_toy(toy_cfg, toy_policy, toy_trials, toy_out,
                     toy_serial ? ExecMode::serial : ExecMode::parallel);
    }
    if (*verify)
      return run_verify(v_k, v_c, v_draws, v_seed, v_spec_seed, v_z, v_out,
                        v_serial ? ExecMode::serial : ExecMode::parallel);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
