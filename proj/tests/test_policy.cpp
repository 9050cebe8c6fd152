#include <cmath>
#include <vector>

#include "carsm/policy.hpp"
#include "carsm/stats.hpp"
#include "doctest.h"

using namespace carsm::policy;
using carsm::Rng;

TEST_CASE("dirichlet rows are simplex points with uniform means") {
  Rng rng(3);
  const int k_dims = 3, n = 7;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(k_dims, n);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const DirichletMatrix dir = sample_dirichlet(k_dims, n, rng);
    for (int k = 0; k < k_dims; ++k) {
      CHECK(dir.row(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(dir.row(k).minCoeff() > 0.0);
    }
    mean += dir;
  }
  mean /= draws;
  // Dir(1_C) marginals have mean 1/C and sd sqrt(C-1)/(C sqrt(C+1)).
  const double se = std::sqrt((n - 1.0) / (n + 1.0)) / n / std::sqrt(draws);
  CHECK((mean.array() - 1.0 / n).abs().maxCoeff() < 5.0 * se);
}

TEST_CASE("select_action on a forced case") {
  Eigen::MatrixXd logits(1, 2), dir(1, 2);
  logits << 0.0, 10.0;
  dir << 0.5, 0.5;
  // z = (ln 0.5 - 0, ln 0.5 - 10): the larger logit wins.
  CHECK(select_action(logits, dir) == ActionVector{1});
}

TEST_CASE("argmin ties resolve to the lowest index") {
  Eigen::VectorXd v(4);
  v << 2.0, 1.0, 1.0, 3.0;
  CHECK(argmin_index(v) == 1);
}

TEST_CASE("select_action samples the softmax distribution") {
  // Regression test: the Dirichlet argmin reparametrization must reproduce
  // Categorical(softmax(phi)) exactly, per dimension.
  Rng rng(11);
  Eigen::MatrixXd logits(2, 3);
  logits << 0.3, -0.7, 1.1, 2.0, 0.0, -1.0;
  const Eigen::MatrixXd probs = action_probs(logits);
  const int draws = 50000;
  std::vector<std::vector<long>> counts(2, std::vector<long>(3, 0));
  for (int i = 0; i < draws; ++i) {
    const ActionVector a = select_action(logits, sample_dirichlet(2, 3, rng));
    ++counts[0][a[0]];
    ++counts[1][a[1]];
  }
  for (int k = 0; k < 2; ++k) {
    const std::vector<double> expect = {probs(k, 0), probs(k, 1), probs(k, 2)};
    CHECK(carsm::stats::chi_square_gof_pvalue(counts[k], expect) > 1e-4);
  }
}

TEST_CASE("action_probs closed form and invariance") {
  Eigen::MatrixXd logits(1, 2);
  logits << 1.0, 0.0;
  const Eigen::MatrixXd p = action_probs(logits);
  CHECK(p(0, 0) == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK(p(0, 1) == doctest::Approx(0.268941).epsilon(1e-5));
  // Shift invariance and overflow safety.
  Eigen::MatrixXd shifted(1, 2);
  shifted << 1.0 + 500.0, 0.0 + 500.0;
  CHECK((action_probs(shifted) - p).array().abs().maxCoeff() < 1e-12);
}

TEST_CASE("log_prob and its gradient") {
  Eigen::MatrixXd logits(2, 2);
  logits << 1.0, 0.0, 0.0, 0.0;
  CHECK(log_prob(logits, {0, 1}) ==
        doctest::Approx(std::log(0.731059) + std::log(0.5)).epsilon(1e-5));

  const Eigen::MatrixXd g = log_prob_grad(logits, {0, 1});
  const Eigen::MatrixXd p = action_probs(logits);
  CHECK(g(0, 0) == doctest::Approx(1.0 - p(0, 0)).epsilon(1e-12));
  CHECK(g(0, 1) == doctest::Approx(-p(0, 1)).epsilon(1e-12));
  CHECK(g.row(0).sum() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.row(1).sum() == doctest::Approx(0.0).epsilon(1e-12));

  // Central-difference check of d log pi / d phi.
  const double eps = 1e-6;
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 2; ++c) {
      Eigen::MatrixXd up = logits, down = logits;
      up(k, c) += eps;
      down(k, c) -= eps;
      const double fd =
          (log_prob(up, {0, 1}) - log_prob(down, {0, 1})) / (2 * eps);
      CHECK(g(k, c) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("entropy of factored categorical") {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(3, 5);
  CHECK(entropy(logits) == doctest::Approx(3.0 * std::log(5.0)).epsilon(1e-12));
  CHECK(entropy_grad(logits).array().abs().maxCoeff() < 1e-12);

  Eigen::MatrixXd skew(1, 3);
  skew << 0.2, -0.4, 1.0;
  const Eigen::MatrixXd g = entropy_grad(skew);
  const double eps = 1e-6;
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd up = skew, down = skew;
    up(0, c) += eps;
    down(0, c) -= eps;
    const double fd = (entropy(up) - entropy(down)) / (2 * eps);
    CHECK(g(0, c) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("flat logits layout is row-major by dimension") {
  Eigen::VectorXd flat(6);
  flat << 1, 2, 3, 4, 5, 6;
  const PolicyLogits logits = logits_from_flat(flat, 2, 3);
  CHECK(logits(0, 0) == 1);
  CHECK(logits(0, 2) == 3);
  CHECK(logits(1, 0) == 4);
  CHECK(logits(1, 2) == 6);
  CHECK(flat_from_logits(logits) == flat);
}

TEST_CASE("gaussian policy pieces") {
  GaussianPolicyParams params{0.0, 1.0};
  CHECK(gaussian_log_prob(params, 0.0) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK(gaussian_entropy(params) ==
        doctest::Approx(0.5 * std::log(2.0 * M_PI * std::exp(1.0)))
            .epsilon(1e-12));

  Rng rng(5);
  carsm::stats::MeanVar mv;
  for (int i = 0; i < 100000; ++i) {
    const GaussianDraw d = gaussian_sample(GaussianPolicyParams{2.0, 0.5}, rng);
    CHECK(d.action == doctest::Approx(2.0 + 0.5 * d.noise).epsilon(1e-12));
    mv.add(d.action);
  }
  CHECK(std::abs(mv.mean - 2.0) < 4.0 * mv.std_error());
  CHECK(mv.variance() == doctest::Approx(0.25).epsilon(0.03));
}
