#include "carsm/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace carsm::envs {

namespace {
constexpr double kPi = 3.141592653589793238;

double wrap_angle(double x) {
  while (x > kPi) x -= 2.0 * kPi;
  while (x < -kPi) x += 2.0 * kPi;
  return x;
}

void check_scalar_action(const ActionVector& action, int n_choices,
                         const char* who) {
  if (action.size() != 1)
    throw std::invalid_argument(std::string(who) + ": expected one dimension");
  if (action[0] < 0 || action[0] >= n_choices)
    throw std::invalid_argument(std::string(who) + ": action out of range");
}
}  // namespace

double discretize_action(int index, int n_choices) {
  if (n_choices < 1) throw std::invalid_argument("discretize_action: C < 1");
  if (index < 0 || index >= n_choices)
    throw std::invalid_argument("discretize_action: index out of range");
  if (n_choices == 1) return 0.0;
  return (2.0 * index - (n_choices - 1)) / (n_choices - 1);
}

Eigen::VectorXd discretize_action(const ActionVector& action, int n_choices) {
  Eigen::VectorXd out(action.size());
  for (size_t k = 0; k < action.size(); ++k)
    out(k) = discretize_action(action[k], n_choices);
  return out;
}

BanditConfig bandit_config_for(double m) {
  if (m <= -1.0 || m >= 1.0)
    throw std::invalid_argument("bandit_config_for: m must lie in (-1, 1)");
  BanditConfig cfg;
  cfg.m = m;
  cfg.c1 = 40.0 / ((1.0 - m) * (1.0 - m));
  cfg.c2 = 41.0 / ((1.0 + m) * (1.0 + m));
  cfg.noise_sd1 = 2.0;
  cfg.noise_sd2 = 1.0;
  return cfg;
}

double bandit_mean_reward(const BanditConfig& cfg, double a) {
  if (a >= cfg.m) return -cfg.c1 * (a - 1.0) * (a - cfg.m);
  return -cfg.c2 * (a + 1.0) * (a - cfg.m);
}

double bandit_mean_reward_grad(const BanditConfig& cfg, double a) {
  if (a >= cfg.m) return -cfg.c1 * (2.0 * a - 1.0 - cfg.m);
  return -cfg.c2 * (2.0 * a + 1.0 - cfg.m);
}

double bandit_reward(const BanditConfig& cfg, double a, Rng& rng) {
  if (a < -1.0 || a > 1.0)
    throw std::invalid_argument("bandit_reward: action outside [-1, 1]");
  const double sd = a >= cfg.m ? cfg.noise_sd1 : cfg.noise_sd2;
  return bandit_mean_reward(cfg, a) + sd * rng.normal();
}

// ---------------------------------------------------------------- CartPole

namespace {
constexpr double kGravity = 9.8;
constexpr double kMassCart = 1.0;
constexpr double kMassPole = 0.1;
constexpr double kTotalMass = kMassCart + kMassPole;
constexpr double kHalfLength = 0.5;
constexpr double kPoleMassLength = kMassPole * kHalfLength;
constexpr double kForceMag = 10.0;
constexpr double kDt = 0.02;
constexpr double kXLimit = 2.4;
constexpr double kThetaLimit = 12.0 * kPi / 180.0;
}  // namespace

CartPoleEnv::CartPoleEnv(Mode mode, int n_choices, uint64_t seed)
    : mode_(mode), n_choices_(n_choices), state_(Eigen::Vector4d::Zero()),
      rng_(seed) {
  if (mode == Mode::discrete && n_choices != 2)
    throw std::invalid_argument("CartPoleEnv: discrete mode requires C = 2");
  if (n_choices < 2)
    throw std::invalid_argument("CartPoleEnv: need at least two actions");
}

Eigen::VectorXd CartPoleEnv::reset() {
  for (int i = 0; i < 4; ++i) state_(i) = -0.05 + 0.1 * rng_.uniform();
  steps_ = 0;
  done_ = false;
  return state_;
}

StepResult CartPoleEnv::step(const ActionVector& action) {
  if (done_) throw std::logic_error("CartPoleEnv::step: episode is over");
  check_scalar_action(action, n_choices_, "CartPoleEnv::step");

  const double force =
      mode_ == Mode::discrete
          ? (action[0] == 0 ? -kForceMag : kForceMag)
          : kForceMag * discretize_action(action[0], n_choices_);

  const double x = state_(0), x_dot = state_(1);
  const double theta = state_(2), theta_dot = state_(3);
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double temp =
      (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) /
      (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / kTotalMass));
  const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;

  state_(0) = x + kDt * x_dot;
  state_(1) = x_dot + kDt * x_acc;
  state_(2) = theta + kDt * theta_dot;
  state_(3) = theta_dot + kDt * theta_acc;
  steps_ += 1;

  const bool failed =
      std::abs(state_(0)) > kXLimit || std::abs(state_(2)) > kThetaLimit;
  done_ = failed || steps_ >= episode_cap();
  return {state_, 1.0, done_};
}

EnvState CartPoleEnv::snapshot() const {
  EnvState s;
  s.dynamics = {state_(0), state_(1), state_(2), state_(3)};
  s.steps = steps_;
  s.done = done_;
  s.rng = rng_;
  return s;
}

void CartPoleEnv::restore(const EnvState& s) {
  if (s.dynamics.size() != 4)
    throw std::invalid_argument("CartPoleEnv::restore: bad state size");
  for (int i = 0; i < 4; ++i) state_(i) = s.dynamics[i];
  steps_ = s.steps;
  done_ = s.done;
  rng_ = s.rng;
}

std::unique_ptr<Env> CartPoleEnv::clone() const {
  return std::make_unique<CartPoleEnv>(*this);
}

// ----------------------------------------------------------------- Acrobot

namespace {
constexpr double kAcroDt = 0.2;
constexpr double kLinkMass = 1.0;
constexpr double kLinkLength = 1.0;
constexpr double kLinkCom = 0.5;
constexpr double kLinkInertia = 1.0;
constexpr double kMaxVel1 = 4.0 * kPi;
constexpr double kMaxVel2 = 9.0 * kPi;

Eigen::Vector4d acrobot_dsdt(const Eigen::Vector4d& s, double torque) {
  const double m = kLinkMass, l1 = kLinkLength, lc = kLinkCom;
  const double i1 = kLinkInertia, i2 = kLinkInertia, g = 9.8;
  const double t1 = s(0), t2 = s(1), d1v = s(2), d2v = s(3);

  const double d1 =
      m * lc * lc + m * (l1 * l1 + lc * lc + 2.0 * l1 * lc * std::cos(t2)) +
      i1 + i2;
  const double d2 = m * (lc * lc + l1 * lc * std::cos(t2)) + i2;
  const double phi2 = m * lc * g * std::cos(t1 + t2 - kPi / 2.0);
  const double phi1 = -m * l1 * lc * d2v * d2v * std::sin(t2) -
                      2.0 * m * l1 * lc * d2v * d1v * std::sin(t2) +
                      (m * lc + m * l1) * g * std::cos(t1 - kPi / 2.0) + phi2;
  const double dd2 =
      (torque + d2 / d1 * phi1 - m * l1 * lc * d1v * d1v * std::sin(t2) -
       phi2) /
      (m * lc * lc + i2 - d2 * d2 / d1);
  const double dd1 = -(d2 * dd2 + phi1) / d1;
  return {d1v, d2v, dd1, dd2};
}

Eigen::Vector4d rk4_step(const Eigen::Vector4d& s, double torque, double dt) {
  const Eigen::Vector4d k1 = acrobot_dsdt(s, torque);
  const Eigen::Vector4d k2 = acrobot_dsdt(s + 0.5 * dt * k1, torque);
  const Eigen::Vector4d k3 = acrobot_dsdt(s + 0.5 * dt * k2, torque);
  const Eigen::Vector4d k4 = acrobot_dsdt(s + dt * k3, torque);
  return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}
}  // namespace

AcrobotEnv::AcrobotEnv(uint64_t seed)
    : state_(Eigen::Vector4d::Zero()), rng_(seed) {}

Eigen::VectorXd AcrobotEnv::observe() const {
  Eigen::VectorXd obs(6);
  obs << std::cos(state_(0)), std::sin(state_(0)), std::cos(state_(1)),
      std::sin(state_(1)), state_(2), state_(3);
  return obs;
}

Eigen::VectorXd AcrobotEnv::reset() {
  for (int i = 0; i < 4; ++i) state_(i) = -0.1 + 0.2 * rng_.uniform();
  steps_ = 0;
  done_ = false;
  return observe();
}

StepResult AcrobotEnv::step(const ActionVector& action) {
  if (done_) throw std::logic_error("AcrobotEnv::step: episode is over");
  check_scalar_action(action, 3, "AcrobotEnv::step");
  const double torque = discretize_action(action[0], 3);  // {-1, 0, +1}

  state_ = rk4_step(state_, torque, kAcroDt);
  state_(0) = wrap_angle(state_(0));
  state_(1) = wrap_angle(state_(1));
  state_(2) = std::clamp(state_(2), -kMaxVel1, kMaxVel1);
  state_(3) = std::clamp(state_(3), -kMaxVel2, kMaxVel2);
  steps_ += 1;

  const bool reached =
      -std::cos(state_(0)) - std::cos(state_(1) + state_(0)) > 1.0;
  done_ = reached || steps_ >= episode_cap();
  return {observe(), -1.0, done_};
}

EnvState AcrobotEnv::snapshot() const {
  EnvState s;
  s.dynamics = {state_(0), state_(1), state_(2), state_(3)};
  s.steps = steps_;
  s.done = done_;
  s.rng = rng_;
  return s;
}

void AcrobotEnv::restore(const EnvState& s) {
  if (s.dynamics.size() != 4)
    throw std::invalid_argument("AcrobotEnv::restore: bad state size");
  for (int i = 0; i < 4; ++i) state_(i) = s.dynamics[i];
  steps_ = s.steps;
  done_ = s.done;
  rng_ = s.rng;
}

std::unique_ptr<Env> AcrobotEnv::clone() const {
  return std::make_unique<AcrobotEnv>(*this);
}

// ------------------------------------------------------------------ Bandit

BanditEnv::BanditEnv(const BanditConfig& cfg, int n_choices, uint64_t seed)
    : cfg_(cfg), n_choices_(n_choices), rng_(seed) {
  if (n_choices < 2)
    throw std::invalid_argument("BanditEnv: need at least two actions");
}

Eigen::VectorXd BanditEnv::reset() {
  steps_ = 0;
  done_ = false;
  return Eigen::VectorXd::Zero(1);
}

StepResult BanditEnv::step(const ActionVector& action) {
  if (done_) throw std::logic_error("BanditEnv::step: episode is over");
  check_scalar_action(action, n_choices_, "BanditEnv::step");
  const double a = discretize_action(action[0], n_choices_);
  steps_ += 1;
  done_ = true;
  return {Eigen::VectorXd::Zero(1), bandit_reward(cfg_, a, rng_), true};
}

EnvState BanditEnv::snapshot() const {
  EnvState s;
  s.steps = steps_;
  s.done = done_;
  s.rng = rng_;
  return s;
}

void BanditEnv::restore(const EnvState& s) {
  steps_ = s.steps;
  done_ = s.done;
  rng_ = s.rng;
}

std::unique_ptr<Env> BanditEnv::clone() const {
  return std::make_unique<BanditEnv>(*this);
}

std::unique_ptr<Env> make_env(const std::string& name, int n_choices,
                              uint64_t seed) {
  if (name == "cartpole")
    return std::make_unique<CartPoleEnv>(CartPoleEnv::Mode::discrete, 2, seed);
  if (name == "cartpole-cont")
    return std::make_unique<CartPoleEnv>(CartPoleEnv::Mode::continuous,
                                         n_choices, seed);
  if (name == "acrobot") return std::make_unique<AcrobotEnv>(seed);
  if (name == "bandit")
    return std::make_unique<BanditEnv>(bandit_config_for(0.0), n_choices,
                                       seed);
  throw std::invalid_argument("make_env: unknown environment " + name);
}

}  // namespace carsm::envs
