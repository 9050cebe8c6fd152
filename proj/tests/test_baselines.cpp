#include <cmath>
#include <vector>

#include "carsm/baselines.hpp"
#include "carsm/critic.hpp"
#include "carsm/stats.hpp"
#include "doctest.h"

using namespace carsm;
using namespace carsm::baselines;
using approx::Mlp;
using approx::mlp_forward;
using approx::mlp_init;
using policy::ActionVector;

TEST_CASE("reinforce_gradient is the gradient of sum y_t log pi") {
  const int k_dims = 2, n = 3, obs_dim = 3, horizon = 5;
  Mlp net = mlp_init({obs_dim, 8, k_dims * n}, 7);
  Rng rng(13);
  std::vector<Eigen::VectorXd> states;
  std::vector<ActionVector> actions;
  std::vector<double> y_on;
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd s(obs_dim);
    for (int i = 0; i < obs_dim; ++i) s(i) = rng.normal();
    states.push_back(s);
    actions.push_back({rng.uniform_int(n), rng.uniform_int(n)});
    y_on.push_back(rng.normal());
  }

  const approx::ParameterGradient grad =
      reinforce_gradient(net, states, actions, y_on, n);
  REQUIRE(grad.size() == approx::param_count(net));

  const auto objective = [&](const Eigen::VectorXd& theta) {
    Mlp probe = net;
    approx::unflatten(probe, theta);
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const policy::PolicyLogits logits = policy::logits_from_flat(
          mlp_forward(probe, states[t]), k_dims, n);
      total += y_on[t] * policy::log_prob(logits, actions[t]);
    }
    return total;
  };
  const Eigen::VectorXd theta = approx::flatten(net);
  const double eps = 1e-6;
  Rng pick(3);
  for (int rep = 0; rep < 20; ++rep) {
    const int i = pick.uniform_int(static_cast<int>(theta.size()));
    Eigen::VectorXd up = theta, dn = theta;
    up(i) += eps;
    dn(i) -= eps;
    const double fd = (objective(up) - objective(dn)) / (2 * eps);
    CHECK(grad(i) == doctest::Approx(fd).epsilon(5e-5));
  }

  CHECK(reinforce_gradient(net, {}, {}, {}, n).isZero(0.0));
  CHECK_THROWS(reinforce_gradient(net, states, actions, {1.0}, n));
}

TEST_CASE("gae closed forms") {
  GaeConfig cfg;
  cfg.gamma = 0.5;
  cfg.lambda = 0.5;
  cfg.normalize = false;

  // delta_1 = 2 + 0.5 * 0.125 - 0.25 = 1.8125, A_1 = 1.8125
  // delta_0 = 1 + 0.5 * 0.25 - 0.5 = 0.625, A_0 = 0.625 + 0.25 * 1.8125
  const std::vector<double> adv =
      gae({1.0, 2.0}, {0.5, 0.25, 0.125}, {0, 0}, cfg);
  REQUIRE(adv.size() == 2);
  CHECK(adv[1] == doctest::Approx(1.8125).epsilon(1e-15));
  CHECK(adv[0] == doctest::Approx(1.078125).epsilon(1e-15));

  // A done flag cuts both the TD residual and the recursion.
  const std::vector<double> cut =
      gae({1.0, 2.0}, {0.5, 0.25, 0.125}, {1, 0}, cfg);
  CHECK(cut[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cut[1] == doctest::Approx(1.8125).epsilon(1e-15));

  // lambda = 1 with zero values and no terminals recovers reward-to-go.
  GaeConfig mc;
  mc.gamma = 0.5;
  mc.lambda = 1.0;
  mc.normalize = false;
  const std::vector<double> togo = gae({1.0, 1.0, 1.0}, {0, 0, 0, 0},
                                       {0, 0, 0}, mc);
  const std::vector<double> want = critic::on_policy_targets({1, 1, 1}, 0.5);
  for (int t = 0; t < 3; ++t)
    CHECK(togo[t] == doctest::Approx(want[t]).epsilon(1e-15));

  CHECK_THROWS(gae({1.0}, {0.0}, {0}, cfg));  // needs horizon + 1 values
}

TEST_CASE("gae normalization gives zero mean and unit variance") {
  GaeConfig cfg;
  cfg.gamma = 0.9;
  cfg.lambda = 0.95;
  cfg.normalize = true;
  Rng rng(19);
  std::vector<double> rewards(7), values(8);
  std::vector<unsigned char> dones(7, 0);
  for (double& r : rewards) r = rng.normal();
  for (double& v : values) v = rng.normal();
  dones[3] = 1;

  const std::vector<double> adv = gae(rewards, values, dones, cfg);
  double mean = 0.0, var = 0.0;
  for (double a : adv) mean += a;
  mean /= 7.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= 7.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));

  // Degenerate spread is left untouched instead of dividing by zero.
  const std::vector<double> single = gae({2.0}, {0.0, 0.0}, {1}, cfg);
  CHECK(single[0] == 2.0);
}

namespace {

struct Batch {
  std::vector<Eigen::VectorXd> states;
  std::vector<ActionVector> actions;
  std::vector<double> rewards;
  std::vector<unsigned char> dones;
  Eigen::VectorXd final_state;
};

Batch random_batch(int horizon, int obs_dim, int k_dims, int n,
                   uint64_t seed) {
  Rng rng(seed);
  Batch b;
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd s(obs_dim);
    for (int i = 0; i < obs_dim; ++i) s(i) = rng.normal();
    b.states.push_back(s);
    ActionVector a(k_dims);
    for (int k = 0; k < k_dims; ++k) a[k] = rng.uniform_int(n);
    b.actions.push_back(a);
    b.rewards.push_back(rng.normal());
    b.dones.push_back(0);
  }
  b.dones.back() = 1;
  b.final_state = Eigen::VectorXd::Zero(obs_dim);
  return b;
}

}  // namespace

TEST_CASE("a2c_update reports the pre-update losses") {
  const int k_dims = 1, n = 4, obs_dim = 2, horizon = 6;
  const double value_coef = 0.5, entropy_coef = 0.02;
  Mlp policy_net = mlp_init({obs_dim, 8, k_dims * n}, 23);
  Mlp value_net = mlp_init({obs_dim, 8, 1}, 24);
  approx::AdamState policy_adam = approx::adam_init(param_count(policy_net), 1e-3);
  approx::AdamState value_adam = approx::adam_init(param_count(value_net), 1e-3);
  const Batch b = random_batch(horizon, obs_dim, k_dims, n, 37);
  GaeConfig cfg;
  cfg.gamma = 0.9;
  cfg.lambda = 0.95;
  cfg.normalize = true;

  // Expected losses from the public pieces, before the update mutates nets.
  std::vector<double> values(horizon + 1);
  for (int t = 0; t < horizon; ++t)
    values[t] = mlp_forward(value_net, b.states[t])(0);
  values[horizon] = mlp_forward(value_net, b.final_state)(0);
  const std::vector<double> adv = gae(b.rewards, values, b.dones, cfg);
  const std::vector<double> y_on =
      critic::on_policy_targets(b.rewards, cfg.gamma);
  double policy_loss = 0.0, value_loss = 0.0, ent = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const policy::PolicyLogits logits = policy::logits_from_flat(
        mlp_forward(policy_net, b.states[t]), k_dims, n);
    policy_loss -= adv[t] * policy::log_prob(logits, b.actions[t]);
    ent += policy::entropy(logits);
    value_loss += (y_on[t] - values[t]) * (y_on[t] - values[t]);
  }
  policy_loss /= horizon;
  value_loss /= horizon;
  ent /= horizon;

  const A2cLosses losses = a2c_update(
      policy_net, policy_adam, value_net, value_adam, b.states, b.actions,
      b.rewards, b.dones, b.final_state, n, cfg, value_coef, entropy_coef, 10);
  CHECK(losses.policy_loss == doctest::Approx(policy_loss).epsilon(1e-10));
  CHECK(losses.value_loss == doctest::Approx(value_loss).epsilon(1e-10));
  CHECK(losses.entropy == doctest::Approx(ent).epsilon(1e-10));
  CHECK(losses.total == doctest::Approx(policy_loss + value_coef * value_loss -
                                        entropy_coef * ent)
                            .epsilon(1e-10));
  // The policy took one Adam step, the value net v_iter of them.
  CHECK(policy_adam.t == 1);
  CHECK(value_adam.t == 10);
}

TEST_CASE("a2c_update with v_iter 0 leaves the value net untouched") {
  const int n = 3;
  Mlp policy_net = mlp_init({2, 4, n}, 31);
  Mlp value_net = mlp_init({2, 4, 1}, 32);
  approx::AdamState pa = approx::adam_init(param_count(policy_net), 1e-3);
  approx::AdamState va = approx::adam_init(param_count(value_net), 1e-3);
  const Batch b = random_batch(4, 2, 1, n, 41);
  const Eigen::VectorXd before = flatten(value_net);

  a2c_update(policy_net, pa, value_net, va, b.states, b.actions, b.rewards,
             b.dones, b.final_state, n, GaeConfig{}, 0.5, 0.01, 0);
  CHECK((flatten(value_net) - before).isZero(0.0));
  CHECK(va.t == 0);

  // Empty batch is a no-op reporting zero losses.
  const A2cLosses zero =
      a2c_update(policy_net, pa, value_net, va, {}, {}, {}, {},
                 b.final_state, n, GaeConfig{}, 0.5, 0.01, 3);
  CHECK(zero.total == 0.0);
  CHECK_THROWS(a2c_update(policy_net, pa, value_net, va, b.states, b.actions,
                          {1.0}, b.dones, b.final_state, n, GaeConfig{}, 0.5,
                          0.01, 3));
}

TEST_CASE("repeated a2c updates reinforce a rewarded action") {
  // One state, one action, big positive advantage held fixed (v_iter = 0):
  // the policy must concentrate on the taken action.
  const int n = 3;
  Mlp policy_net = mlp_init({1, 8, n}, 51);
  Mlp value_net = mlp_init({1, 8, 1}, 52);
  approx::AdamState pa = approx::adam_init(param_count(policy_net), 0.02);
  approx::AdamState va = approx::adam_init(param_count(value_net), 0.02);

  const std::vector<Eigen::VectorXd> states{Eigen::VectorXd::Ones(1)};
  const std::vector<ActionVector> actions{{1}};
  const std::vector<double> rewards{5.0};
  const std::vector<unsigned char> dones{1};
  const Eigen::VectorXd final_state = Eigen::VectorXd::Zero(1);
  GaeConfig cfg;
  cfg.normalize = false;  // single sample: normalized advantage would be 0

  for (int it = 0; it < 300; ++it)
    a2c_update(policy_net, pa, value_net, va, states, actions, rewards, dones,
               final_state, n, cfg, 0.5, 0.0, 0);

  const Eigen::MatrixXd probs = policy::action_probs(policy::logits_from_flat(
      mlp_forward(policy_net, states[0]), 1, n));
  CHECK(probs(0, 1) > 0.9);
}

TEST_CASE("a2c value iterations fit the on-policy return") {
  const int n = 3;
  Mlp policy_net = mlp_init({1, 8, n}, 61);
  Mlp value_net = mlp_init({1, 8, 1}, 62);
  approx::AdamState pa = approx::adam_init(param_count(policy_net), 1e-4);
  approx::AdamState va = approx::adam_init(param_count(value_net), 0.02);

  const std::vector<Eigen::VectorXd> states{Eigen::VectorXd::Ones(1)};
  const std::vector<ActionVector> actions{{0}};
  const std::vector<double> rewards{5.0};
  const std::vector<unsigned char> dones{1};
  GaeConfig cfg;
  cfg.normalize = false;

  for (int it = 0; it < 150; ++it)
    a2c_update(policy_net, pa, value_net, va, states, actions, rewards, dones,
               Eigen::VectorXd::Zero(1), n, cfg, 0.5, 0.0, 4);
  CHECK(mlp_forward(value_net, states[0])(0) ==
        doctest::Approx(5.0).epsilon(0.02));
}
