#include "carsm/trpo.hpp"

#include <cmath>
#include <stdexcept>

namespace carsm::trpo {

double kl_factored_categorical(const std::vector<Eigen::MatrixXd>& probs_old,
                               const std::vector<Eigen::MatrixXd>& probs_new) {
  if (probs_old.size() != probs_new.size())
    throw std::invalid_argument("kl_factored_categorical: batch mismatch");
  if (probs_old.empty()) return 0.0;
  constexpr double kClamp = 1e-12;
  double total = 0.0;
  for (size_t i = 0; i < probs_old.size(); ++i) {
    const auto& po = probs_old[i];
    const auto& pn = probs_new[i];
    if (po.rows() != pn.rows() || po.cols() != pn.cols())
      throw std::invalid_argument("kl_factored_categorical: shape mismatch");
    for (int k = 0; k < po.rows(); ++k)
      for (int c = 0; c < po.cols(); ++c) {
        const double p = po(k, c);
        if (p <= 0.0) continue;
        total += p * std::log(std::max(p, kClamp) /
                              std::max(pn(k, c), kClamp));
      }
  }
  return total / static_cast<double>(probs_old.size());
}

Eigen::VectorXd fisher_vector_product(const approx::Mlp& policy_net,
                                      const approx::ForwardTrace& trace,
                                      int k_dims, int n_choices,
                                      const Eigen::VectorXd& v,
                                      double damping) {
  const long batch = trace.layers[0].cols();
  if (batch == 0) return damping * v;

  const Eigen::MatrixXd jv = mlp_jvp(policy_net, trace, v);
  Eigen::MatrixXd u(policy_net.out_dim(), batch);
  for (long i = 0; i < batch; ++i) {
    const Eigen::MatrixXd p = policy::action_probs(policy::logits_from_flat(
        trace.output().col(i), k_dims, n_choices));
    const Eigen::MatrixXd t =
        policy::logits_from_flat(jv.col(i), k_dims, n_choices);
    Eigen::MatrixXd out(k_dims, n_choices);
    for (int k = 0; k < k_dims; ++k) {
      const double dot = p.row(k).dot(t.row(k));
      out.row(k) =
          p.row(k).cwiseProduct(t.row(k)) - dot * p.row(k);
    }
    u.col(i) = policy::flat_from_logits(out) / static_cast<double>(batch);
  }
  return mlp_backward(policy_net, trace, u).param_grad + damping * v;
}

Eigen::VectorXd conjugate_gradient(const MatVecFn& apply,
                                   const Eigen::VectorXd& b, int max_iters,
                                   double tol) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = b;
  double rs = r.squaredNorm();
  for (int it = 0; it < max_iters && rs > tol; ++it) {
    const Eigen::VectorXd hp = apply(p);
    const double denom = p.dot(hp);
    if (denom <= 0.0) break;  // operator not positive along p; stop early
    const double alpha = rs / denom;
    x += alpha * p;
    r -= alpha * hp;
    const double rs_next = r.squaredNorm();
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  return x;
}

TrpoStepResult trpo_step(approx::Mlp& policy_net,
                         const Eigen::VectorXd& ascent_grad,
                         const std::vector<Eigen::VectorXd>& states,
                         int k_dims, int n_choices, const TrpoConfig& cfg) {
  TrpoStepResult res;
  if (states.empty() || ascent_grad.norm() < 1e-12) return res;

  const int batch = static_cast<int>(states.size());
  Eigen::MatrixXd inputs(policy_net.in_dim(), batch);
  for (int i = 0; i < batch; ++i) inputs.col(i) = states[i];
  const approx::ForwardTrace trace = mlp_forward_trace(policy_net, inputs);

  std::vector<Eigen::MatrixXd> probs_old(batch);
  for (int i = 0; i < batch; ++i)
    probs_old[i] = policy::action_probs(policy::logits_from_flat(
        trace.output().col(i), k_dims, n_choices));

  const MatVecFn apply = [&](const Eigen::VectorXd& v) {
    return fisher_vector_product(policy_net, trace, k_dims, n_choices, v,
                                 cfg.damping);
  };
  const Eigen::VectorXd d =
      conjugate_gradient(apply, ascent_grad, cfg.cg_iters, cfg.cg_tol);
  const double shs = d.dot(apply(d));
  if (!(shs > 0.0)) return res;
  const double beta = std::sqrt(2.0 * cfg.delta / shs);
  const double gd = ascent_grad.dot(d);

  const Eigen::VectorXd theta_old = flatten(policy_net);
  double scale = beta;
  for (int i = 0; i <= cfg.backtrack_steps; ++i, scale *= cfg.backtrack_ratio) {
    Eigen::VectorXd theta = theta_old + scale * d;
    unflatten(policy_net, theta);

    const Eigen::MatrixXd new_out = mlp_forward(policy_net, inputs);
    std::vector<Eigen::MatrixXd> probs_new(batch);
    for (int b = 0; b < batch; ++b)
      probs_new[b] = policy::action_probs(
          policy::logits_from_flat(new_out.col(b), k_dims, n_choices));
    const double kl = kl_factored_categorical(probs_old, probs_new);
    const double improvement = scale * gd;
    if (kl <= cfg.delta && improvement > 0.0) {
      res.accepted = true;
      res.kl = kl;
      res.step_scale = scale;
      res.backtracks = i;
      res.improvement = improvement;
      return res;
    }
  }
  unflatten(policy_net, theta_old);
  return res;
}

}  // namespace carsm::trpo
