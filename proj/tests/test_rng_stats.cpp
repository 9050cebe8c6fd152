#include <cmath>
#include <vector>

#include "carsm/rng.hpp"
#include "carsm/stats.hpp"
#include "doctest.h"

using carsm::Rng;

TEST_CASE("splitmix64 is deterministic and seed-sensitive") {
  CHECK(carsm::splitmix64(1) == carsm::splitmix64(1));
  CHECK(carsm::splitmix64(1) != carsm::splitmix64(2));
  CHECK(carsm::splitmix64(0) != 0);
}

TEST_CASE("rng streams reproduce and differ") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= a2.next_u64() != c.next_u64();
  CHECK(any_diff);
}

TEST_CASE("fork derives independent reproducible streams") {
  Rng root(7);
  Rng f1 = root.fork(1);
  Rng f2 = root.fork(2);
  Rng f1_again = Rng(7).fork(1);
  CHECK(f1.next_u64() == f1_again.next_u64());
  CHECK(Rng(7).fork(1).next_u64() != f2.next_u64());
  // Forking must not consume state from the parent.
  Rng fresh(7);
  const uint64_t direct = Rng(7).next_u64();
  (void)fresh.fork(9);
  CHECK(fresh.next_u64() == direct);
}

TEST_CASE("uniform lies strictly inside (0,1) with the right moments") {
  Rng rng(11);
  carsm::stats::MeanVar mv;
  for (int i = 0; i < 200000; ++i) {
    const double u = rng.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    mv.add(u);
  }
  CHECK(std::abs(mv.mean - 0.5) < 4.0 * mv.std_error());
  CHECK(mv.variance() == doctest::Approx(1.0 / 12.0).epsilon(0.02));
}

TEST_CASE("uniform_int covers its range uniformly") {
  Rng rng(13);
  const int n = 10;
  std::vector<long> counts(n, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const int v = rng.uniform_int(n);
    REQUIRE(v >= 0);
    REQUIRE(v < n);
    ++counts[v];
  }
  const std::vector<double> probs(n, 1.0 / n);
  CHECK(carsm::stats::chi_square_gof_pvalue(counts, probs) > 1e-4);
  CHECK(rng.uniform_int(1) == 0);
}

TEST_CASE("normal and exponential have the right moments") {
  Rng rng(17);
  carsm::stats::MeanVar nm, ex;
  for (int i = 0; i < 200000; ++i) {
    nm.add(rng.normal());
    ex.add(rng.exponential());
  }
  CHECK(std::abs(nm.mean) < 4.0 * nm.std_error());
  CHECK(nm.variance() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(ex.mean - 1.0) < 4.0 * ex.std_error());
  CHECK(ex.variance() == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("normal_cdf matches known values") {
  CHECK(carsm::stats::normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(carsm::stats::normal_cdf(1.959963985) ==
        doctest::Approx(0.975).epsilon(1e-6));
  CHECK(carsm::stats::normal_cdf(-1.0) ==
        doctest::Approx(0.158655).epsilon(1e-5));
}

TEST_CASE("chi-square p-values match known cases") {
  // P(chi2_1 > 16) = 2 (1 - Phi(4)).
  CHECK(carsm::stats::chi_square_pvalue(16.0, 1) ==
        doctest::Approx(6.334e-5).epsilon(0.01));
  CHECK(carsm::stats::chi_square_pvalue(0.0, 3) ==
        doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<long> counts = {30, 70};
  const std::vector<double> probs = {0.5, 0.5};
  CHECK(carsm::stats::chi_square_gof_pvalue(counts, probs) ==
        doctest::Approx(6.334e-5).epsilon(0.01));
}

TEST_CASE("one-sided proportion test") {
  // p_hat = (60+50)/200 = 0.55, z = 0.10 / sqrt(0.55*0.45*(2/100)) = 1.4213.
  const double p = carsm::stats::proportion_test_greater(60, 100, 50, 100);
  CHECK(p == doctest::Approx(0.0776).epsilon(0.01));
  // Identical proportions give p = 0.5.
  CHECK(carsm::stats::proportion_test_greater(10, 100, 10, 100) ==
        doctest::Approx(0.5).epsilon(1e-9));
  // Strong separation is significant.
  CHECK(carsm::stats::proportion_test_greater(12, 100, 0, 100) < 0.001);
}

TEST_CASE("MeanVar uses population variance") {
  carsm::stats::MeanVar mv;
  mv.add(1.0);
  mv.add(3.0);
  CHECK(mv.mean == doctest::Approx(2.0));
  CHECK(mv.variance() == doctest::Approx(1.0));  // ((1)^2 + (1)^2) / 2
}
