#pragma once

#include <vector>

namespace carsm::stats {

// Standard normal CDF.
double normal_cdf(double z);

// Upper-tail p-value of a chi-square statistic with the given degrees of
// freedom.
double chi_square_pvalue(double statistic, int dof);

// Pearson chi-square goodness-of-fit p-value for observed counts against
// expected probabilities (counts and probs must have equal length and the
// probs must sum to 1).
double chi_square_gof_pvalue(const std::vector<long>& counts,
                             const std::vector<double>& probs);

// One-sided two-proportion z-test. Returns the p-value for the alternative
// hypothesis p1 > p2 given x1 successes of n1 and x2 successes of n2, using
// the pooled-variance z statistic.
double proportion_test_greater(long x1, long n1, long x2, long n2);

// Running mean/variance accumulator (Welford) over vector components.
struct MeanVar {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  double variance() const;  // population variance
  double std_error() const;  // standard error of the mean
};

}  // namespace carsm::stats
