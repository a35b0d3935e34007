#ifndef HHMM_STATS_HPP
#define HHMM_STATS_HPP

#include <span>
#include <vector>

namespace hhmm {

// Standard normal CDF and quantile.
double normal_cdf(double x);
double normal_quantile(double p);

// One-sample Kolmogorov-Smirnov test against the standard normal.
// p_value uses the asymptotic Kolmogorov distribution with the Stephens
// small-sample correction. NaN entries are ignored.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};
KsResult ks_test_normal(std::span<const double> values);

// Moments over the finite entries.
double sample_mean(std::span<const double> values);
double sample_sd(std::span<const double> values);

// Empirical quantile (linear interpolation) of the finite entries;
// q in [0, 1].
double sample_quantile(std::vector<double> values, double q);

} // namespace hhmm

#endif
