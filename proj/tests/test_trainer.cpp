#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "carsm/trainer.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace carsm;
using namespace carsm::trainer;

TEST_CASE("collect_episode records a self-consistent trajectory") {
  auto env = envs::make_env("cartpole", 2, 17);
  const approx::Mlp net = approx::mlp_init({4, 16, 2}, 3);
  Rng rng(9);
  critic::ReplayBuffer buffer(512);

  const Trajectory traj = collect_episode(*env, net, rng, &buffer, true);
  const int horizon = traj.length();
  REQUIRE(horizon > 0);
  REQUIRE(traj.dirichlets.size() == static_cast<size_t>(horizon));
  REQUIRE(traj.logits.size() == static_cast<size_t>(horizon));
  REQUIRE(traj.actions.size() == static_cast<size_t>(horizon));
  REQUIRE(traj.rewards.size() == static_cast<size_t>(horizon));
  REQUIRE(traj.dones.size() == static_cast<size_t>(horizon));
  REQUIRE(traj.snapshots.size() == static_cast<size_t>(horizon));

  CHECK(traj.final_done);
  CHECK(traj.dones.back() == 1);
  for (int t = 0; t + 1 < horizon; ++t) CHECK(traj.dones[t] == 0);
  CHECK(traj.episode_return() == static_cast<double>(horizon));  // +1 per step

  for (int t = 0; t < horizon; ++t) {
    // Logits come from the policy network at the recorded state.
    const policy::PolicyLogits want = policy::logits_from_flat(
        approx::mlp_forward(net, traj.states[t]), 1, 2);
    CHECK((traj.logits[t].array() == want.array()).all());
    // Actions are the argmin selection for the recorded Dirichlet draw.
    CHECK(traj.actions[t] ==
          policy::select_action(traj.logits[t], traj.dirichlets[t]));
  }

  // The replay buffer holds the same transitions in order.
  REQUIRE(buffer.size() == static_cast<size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    const critic::Transition& tr = buffer.at(t);
    CHECK((tr.state.array() == traj.states[t].array()).all());
    CHECK(tr.action == traj.actions[t]);
    CHECK(tr.reward == traj.rewards[t]);
    CHECK(tr.done == (traj.dones[t] != 0));
    const Eigen::VectorXd& next =
        t + 1 < horizon ? traj.states[t + 1] : traj.final_state;
    CHECK((tr.next_state.array() == next.array()).all());
  }

  // Snapshots precede each step: restoring one replays the trajectory.
  env->restore(traj.snapshots[0]);
  for (int t = 0; t < horizon; ++t) {
    const envs::StepResult r = env->step(traj.actions[t]);
    CHECK(r.reward == traj.rewards[t]);
  }

  Rng rng2(9);
  auto env2 = envs::make_env("cartpole", 2, 17);
  const Trajectory bare = collect_episode(*env2, net, rng2, nullptr, false);
  CHECK(bare.snapshots.empty());
  CHECK(bare.length() == horizon);
}

TEST_CASE("episodes_to needs a full window") {
  TrainResult result;
  for (double ret : {0.0, 0.0, 0.0, 9.0, 9.0, 9.0}) {
    EpisodeRow row;
    row.episode = static_cast<int>(result.rows.size()) + 1;
    row.ret = ret;
    result.rows.push_back(row);
  }
  CHECK(result.episodes_to(0.0, 3) == 3);   // first full window
  CHECK(result.episodes_to(3.0, 3) == 4);   // mean {0,0,9}
  CHECK(result.episodes_to(9.0, 3) == 6);   // mean {9,9,9}
  CHECK(result.episodes_to(10.0, 3) == -1);
  CHECK(result.episodes_to(0.0, 100) == -1);  // window never fills
}

TEST_CASE("resolve_defaults fills only unset learning rates") {
  RunConfig carsm;
  carsm.algo = "carsm";
  resolve_defaults(carsm);
  CHECK(carsm.lr_policy == 0.01);
  CHECK(carsm.lr_critic == 0.01);

  RunConfig a2c;
  a2c.algo = "a2c";
  resolve_defaults(a2c);
  CHECK(a2c.lr_policy == 3e-4);
  CHECK(a2c.lr_critic == 3e-4);

  RunConfig keep;
  keep.algo = "a2c";
  keep.lr_policy = 0.5;
  resolve_defaults(keep);
  CHECK(keep.lr_policy == 0.5);
  CHECK(keep.lr_critic == 0.5);  // critic default follows the policy rate
}

namespace {

RunConfig small_bandit_run(const std::string& algo, int episodes) {
  RunConfig cfg;
  cfg.algo = algo;
  cfg.env = "bandit";
  cfg.n_choices = 5;
  cfg.episodes = episodes;
  cfg.seed = 4;
  cfg.n_critic = 5;
  cfg.replay_capacity = 4096;
  cfg.hidden = {16};
  return cfg;
}

}  // namespace

TEST_CASE("train_run is deterministic and logs well-formed CSV") {
  const RunConfig cfg = small_bandit_run("carsm", 12);
  const TrainResult first = train_run(cfg);
  const TrainResult second = train_run(cfg);
  const std::string csv = csv_text(first);
  CHECK(csv == csv_text(second));

  std::istringstream lines(csv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "episode,timesteps,return,avg100,alpha,critic_loss,wall_ms");
  int n_rows = 0;
  while (std::getline(lines, line)) {
    ++n_rows;
    int episode = 0;
    long timesteps = 0, wall = -1;
    double ret = 0, avg = 0, alpha = 0, closs = 0;
    REQUIRE(std::sscanf(line.c_str(), "%d,%ld,%lf,%lf,%lf,%lf,%ld", &episode,
                        &timesteps, &ret, &avg, &alpha, &closs, &wall) == 7);
    CHECK(episode == n_rows);
    CHECK(wall == 0);  // timing lives in the manifest, not the log
  }
  CHECK(n_rows == 12);

  // Row fields round-trip the in-memory rows.
  CHECK(first.rows.size() == 12);
  CHECK(first.rows[0].episode == 1);
  CHECK(first.rows[0].avg100 == first.rows[0].ret);  // window of one
  // Bandit episodes are one step each and carsm does no pseudo rollouts.
  CHECK(first.pseudo_steps == 0);
  CHECK(first.env_steps == 12);
  CHECK(first.rows.back().timesteps == 12);
  // Entropy coefficient decays once per episode.
  CHECK(first.rows[0].alpha == cfg.alpha0);
  CHECK(first.rows[1].alpha ==
        doctest::Approx(cfg.alpha0 * 0.999).epsilon(1e-12));
}

TEST_CASE("a2c and trpo-carsm runs are deterministic") {
  RunConfig a2c = small_bandit_run("a2c", 8);
  CHECK(csv_text(train_run(a2c)) == csv_text(train_run(a2c)));

  RunConfig tc = small_bandit_run("trpo-carsm", 8);
  const TrainResult run = train_run(tc);
  CHECK(csv_text(run) == csv_text(train_run(tc)));
  // Every accepted trust-region step respected the KL radius.
  for (double kl : run.accepted_kls) CHECK(kl <= tc.trpo.delta + 1e-12);
}

TEST_CASE("standalone trpo trains within the KL radius deterministically") {
  RunConfig cfg = small_bandit_run("trpo", 8);
  const TrainResult run = train_run(cfg);
  CHECK(run.rows.size() == 8);
  CHECK(csv_text(run) == csv_text(train_run(cfg)));
  CHECK(!run.accepted_kls.empty());
  for (double kl : run.accepted_kls) CHECK(kl <= cfg.trpo.delta + 1e-12);
}

TEST_CASE("arsm-mc accounts pseudo rollout steps in the timestep column") {
  RunConfig cfg = small_bandit_run("arsm-mc", 10);
  cfg.rollout_budget = 100;  // C = 5 needs at most C(C-1)/2 = 10 rollouts
  const TrainResult run = train_run(cfg);
  CHECK(run.pseudo_steps > 0);
  CHECK(run.max_rollouts_per_update <= 10);
  CHECK(run.rows.back().timesteps == run.env_steps + run.pseudo_steps);

  // Zero budget: no rollouts happen, the run still proceeds.
  RunConfig none = small_bandit_run("arsm-mc", 5);
  none.rollout_budget = 0;
  const TrainResult empty = train_run(none);
  CHECK(empty.pseudo_steps == 0);
  CHECK(empty.max_rollouts_per_update == 0);
}

TEST_CASE("stop_threshold halts at the first full qualifying window") {
  RunConfig cfg = small_bandit_run("carsm", 150);
  cfg.stop_threshold = -1e9;  // any full window qualifies
  const TrainResult run = train_run(cfg);
  CHECK(run.rows.size() == 100);

  RunConfig shorter = small_bandit_run("carsm", 40);
  shorter.stop_threshold = -1e9;  // window never fills in 40 episodes
  CHECK(train_run(shorter).rows.size() == 40);
}

TEST_CASE("write_csv and write_manifest round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "carsm_trainer_test";
  fs::create_directories(dir);
  const std::string csv_path = (dir / "run.csv").string();
  const std::string manifest_path = csv_path + ".manifest.json";

  RunConfig cfg = small_bandit_run("carsm", 6);
  cfg.out = csv_path;
  const TrainResult run = train_run(cfg);

  std::ifstream csv_in(csv_path);
  REQUIRE(csv_in.good());
  std::stringstream csv_data;
  csv_data << csv_in.rdbuf();
  CHECK(csv_data.str() == csv_text(run));

  std::ifstream manifest_in(manifest_path);
  REQUIRE(manifest_in.good());
  const nlohmann::json manifest = nlohmann::json::parse(manifest_in);
  CHECK(manifest["config"]["algo"] == "carsm");
  CHECK(manifest["config"]["env"] == "bandit");
  CHECK(manifest["config"]["seed"] == 4);
  CHECK(manifest["episodes_run"] == 6);
  CHECK(manifest["env_steps"] == 6);
  CHECK(manifest["aborted"] == false);
  CHECK(manifest["wall_ms"].get<double>() >= 0.0);
  CHECK(manifest["final_avg100"].get<double>() ==
        doctest::Approx(run.rows.back().avg100));

  fs::remove_all(dir);
}
