// Timing comparison between the serial reference kernels and their
// OpenMP-sharded counterparts. Every kernel is specified to give bitwise
// identical results in both modes; the benchmark re-checks that on each
// workload before reporting times.
//
//   bench_kernels [--reps N]

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "carsm/arsm.hpp"
#include "carsm/mlp.hpp"
#include "carsm/parallel.hpp"
#include "carsm/policy.hpp"
#include "carsm/rng.hpp"
#include "carsm/toy.hpp"
#include "carsm/verify.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using carsm::ExecMode;
using carsm::Rng;
namespace approx = carsm::approx;
namespace arsm = carsm::arsm;
namespace policy = carsm::policy;
namespace toy = carsm::toy;
namespace verify = carsm::verify;

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    best = std::min(best, ms);
  }
  return best;
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "bitwise identical" : "MISMATCH");
}

void bench_mc_estimator(int reps) {
  Rng rng(11);
  const verify::BanditSpec spec = verify::random_bandit_spec(2, 8, rng);
  policy::PolicyLogits phi(2, 8);
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 8; ++c) phi(k, c) = rng.normal();
  const Eigen::MatrixXd reference = verify::exact_gradient(spec, phi);
  const auto estimator = [&](Rng& r) {
    return verify::arsm_estimate_draw(spec, phi, r);
  };
  const long draws = 200000;

  verify::EstimatorReport serial_rep, parallel_rep;
  const double serial_ms = time_best_of(reps, [&] {
    serial_rep = verify::mc_estimator_mean("bench", estimator, reference,
                                           draws, 5, 10.0, ExecMode::serial);
  });
  const double parallel_ms = time_best_of(reps, [&] {
    parallel_rep = verify::mc_estimator_mean("bench", estimator, reference,
                                             draws, 5, 10.0,
                                             ExecMode::parallel);
  });
  bool identical = serial_rep.max_abs_z == parallel_rep.max_abs_z &&
                   serial_rep.components.size() ==
                       parallel_rep.components.size();
  for (std::size_t i = 0; identical && i < serial_rep.components.size(); ++i)
    identical = serial_rep.components[i].mean ==
                    parallel_rep.components[i].mean &&
                serial_rep.components[i].std_error ==
                    parallel_rep.components[i].std_error;
  report("mc_estimator_mean (200k)", serial_ms, parallel_ms, identical);
}

void bench_carsm_gradient(int reps) {
  const int k_dims = 4, n_choices = 8, t_len = 64, state_dim = 6;
  const approx::Mlp net =
      approx::mlp_init({state_dim, 64, 64, k_dims * n_choices}, 21);
  Rng rng(22);
  std::vector<Eigen::VectorXd> states;
  std::vector<policy::DirichletMatrix> dirichlets;
  std::vector<double> y_on;
  for (int t = 0; t < t_len; ++t) {
    Eigen::VectorXd s(state_dim);
    for (int i = 0; i < state_dim; ++i) s(i) = rng.normal();
    states.push_back(s);
    dirichlets.push_back(policy::sample_dirichlet(k_dims, n_choices, rng));
    y_on.push_back(rng.normal());
  }
  // Cheap stand-in for the critic: a fixed smooth function of the action.
  const arsm::PseudoValueFn values =
      [&](int t, const std::vector<policy::ActionVector>& actions) {
        std::vector<double> out(actions.size());
        for (std::size_t i = 0; i < actions.size(); ++i) {
          double v = 0.1 * t;
          for (int k = 0; k < k_dims; ++k)
            v += std::sin(0.3 * actions[i][k] + k);
          out[i] = v;
        }
        return out;
      };

  arsm::CarsmGradient serial_g, parallel_g;
  const double serial_ms = time_best_of(reps, [&] {
    serial_g = arsm::carsm_gradient(net, states, dirichlets, y_on, values,
                                    n_choices, 0.01, ExecMode::serial);
  });
  const double parallel_ms = time_best_of(reps, [&] {
    parallel_g = arsm::carsm_gradient(net, states, dirichlets, y_on, values,
                                      n_choices, 0.01, ExecMode::parallel);
  });
  const bool identical =
      serial_g.surrogate == parallel_g.surrogate &&
      (serial_g.ascent_grad.array() == parallel_g.ascent_grad.array()).all();
  report("carsm_gradient (T=64,K=4,C=8)", serial_ms, parallel_ms, identical);
}

void bench_toy_run(int reps) {
  toy::ToyConfig cfg;
  cfg.total_samples = 50000;
  const int trials = 8;

  toy::ToyRun serial_run, parallel_run;
  const double serial_ms = time_best_of(reps, [&] {
    serial_run = toy::toy_run(cfg, "discrete", trials, ExecMode::serial);
  });
  const double parallel_ms = time_best_of(reps, [&] {
    parallel_run = toy::toy_run(cfg, "discrete", trials, ExecMode::parallel);
  });
  const bool identical =
      serial_run.global_count == parallel_run.global_count &&
      serial_run.inferior_count == parallel_run.inferior_count &&
      (serial_run.density.array() == parallel_run.density.array()).all();
  report("toy_run (8 trials, 50k)", serial_ms, parallel_ms, identical);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int reps = 3;
  app.add_option("--reps", reps, "repetitions per measurement (best-of)");
  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  std::cout << "OpenMP threads: " << omp_get_max_threads() << "\n";
#else
  std::cout << "built without OpenMP; parallel mode falls back to serial\n";
#endif
  bench_mc_estimator(reps);
  bench_carsm_gradient(reps);
  bench_toy_run(reps);
  return 0;
}
