#include "carsm/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <stdexcept>

namespace carsm::stats {

double normal_cdf(double z) {
  static const boost::math::normal_distribution<double> n01(0.0, 1.0);
  return boost::math::cdf(n01, z);
}

double chi_square_pvalue(double statistic, int dof) {
  if (dof < 1) throw std::invalid_argument("chi_square_pvalue: dof < 1");
  boost::math::chi_squared_distribution<double> dist(dof);
  if (statistic <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

double chi_square_gof_pvalue(const std::vector<long>& counts,
                             const std::vector<double>& probs) {
  if (counts.size() != probs.size() || counts.empty())
    throw std::invalid_argument("chi_square_gof_pvalue: size mismatch");
  long n = 0;
  for (long c : counts) n += c;
  double stat = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    const double expected = probs[i] * static_cast<double>(n);
    if (expected <= 0.0)
      throw std::invalid_argument("chi_square_gof_pvalue: zero expected count");
    const double d = static_cast<double>(counts[i]) - expected;
    stat += d * d / expected;
  }
  return chi_square_pvalue(stat, static_cast<int>(counts.size()) - 1);
}

double proportion_test_greater(long x1, long n1, long x2, long n2) {
  if (n1 <= 0 || n2 <= 0)
    throw std::invalid_argument("proportion_test_greater: empty sample");
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled =
      static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) +
                               1.0 / static_cast<double>(n2)));
  if (se == 0.0) return p1 > p2 ? 0.0 : 1.0;
  const double z = (p1 - p2) / se;
  return 1.0 - normal_cdf(z);
}

void MeanVar::add(double x) {
  n += 1;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

double MeanVar::variance() const {
  return n > 0 ? m2 / static_cast<double>(n) : 0.0;
}

double MeanVar::std_error() const {
  if (n < 2) return 0.0;
  return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace carsm::stats
