#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "carsm/parallel.hpp"
#include "carsm/policy.hpp"
#include "carsm/rng.hpp"

namespace carsm::verify {

using policy::ActionVector;
using policy::PolicyLogits;

// Tabular one-step problem with known action values: K dimensions, C
// choices, values indexed by the joint action in row-major dimension order.
struct BanditSpec {
  int k_dims = 1;
  int n_choices = 2;
  std::vector<double> q;  // size C^K

  long joint_index(const ActionVector& action) const;
  double value(const ActionVector& action) const;
  long joint_count() const;
};

// Spec with independent N(0, 1) action values.
BanditSpec random_bandit_spec(int k_dims, int n_choices, Rng& rng);

// Exact d/dphi E_{a ~ softmax(phi)}[ q(a) ] by full enumeration.
Eigen::MatrixXd exact_gradient(const BanditSpec& spec,
                               const PolicyLogits& logits);

// One draw of the sparse swap-and-merge estimator with exact action values
// standing in for the critic; its expectation equals exact_gradient.
Eigen::MatrixXd arsm_estimate_draw(const BanditSpec& spec,
                                   const PolicyLogits& logits, Rng& rng);

// One draw of the scalar baseline term
//   (1/C) sum_c q(a^{c<->j}) (1 - C pi_j)
// for a fixed swap reference j; its expectation is exactly zero.
double zero_baseline_draw(const BanditSpec& spec, const PolicyLogits& logits,
                          int j, Rng& rng);

struct ComponentStat {
  double mean = 0.0;
  double std_error = 0.0;
  double z = 0.0;
};

struct EstimatorReport {
  std::string name;
  long draws = 0;
  uint64_t seed = 0;
  double z_threshold = 3.0;
  std::vector<ComponentStat> components;
  double max_abs_z = 0.0;
  bool pass = false;
  bool retried = false;  // second attempt with a fresh seed after a failure
};

// Matrix-valued estimator evaluated once per draw.
using EstimatorFn = std::function<Eigen::MatrixXd(Rng&)>;

// Sharded Monte-Carlo mean of the estimator compared against a reference,
// component by component, at the given z threshold. Draws are split over a
// fixed shard count with independent child rng streams and combined in
// shard order, so the result is bitwise identical in serial and parallel
// modes. A failing check is rerun once with a fresh derived seed; two
// consecutive failures fail the check.
EstimatorReport mc_estimator_mean(const std::string& name,
                                  const EstimatorFn& estimator,
                                  const Eigen::MatrixXd& reference,
                                  long n_draws, uint64_t seed,
                                  double z_threshold, ExecMode mode);

// Same harness for the scalar zero-baseline term.
EstimatorReport zero_baseline_check(const BanditSpec& spec,
                                    const PolicyLogits& logits, int j,
                                    long n_draws, uint64_t seed,
                                    ExecMode mode);

// Central finite differences.
double finite_difference(const std::function<double(double)>& f, double x,
                         double eps);
Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double eps);
double finite_difference_directional(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, const Eigen::VectorXd& direction, double eps);

// Relative-error checks of analytic gradients against central differences
// along random unit directions: one randomly built network (and surrogate
// problem) per instance, reporting the worst relative error observed.
// Used by the verification suite; tolerance is pinned by the caller.
double fd_backward_worst_error(int instances, uint64_t seed);
double fd_surrogate_worst_error(int instances, uint64_t seed);

}  // namespace carsm::verify
