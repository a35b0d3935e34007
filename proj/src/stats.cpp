#include "hhmm/stats.hpp"

#include "hhmm/common.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/erf.hpp>

namespace hhmm {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCategory::data,
                "domain: normal quantile needs p in (0,1)");
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p);
}

KsResult ks_test_normal(std::span<const double> values) {
  std::vector<double> xs;
  xs.reserve(values.size());
  for (double v : values)
    if (!is_missing(v)) xs.push_back(v);
  std::sort(xs.begin(), xs.end());

  KsResult res;
  res.n = xs.size();
  if (xs.empty()) return res;

  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf(xs[i]);
    d = std::max(d, f - static_cast<double>(i) / n);
    d = std::max(d, static_cast<double>(i + 1) / n - f);
  }
  res.statistic = d;

  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  // Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += sign * term;
    sign = -sign;
    if (term < 1e-16) break;
  }
  res.p_value = std::clamp(2.0 * p, 0.0, 1.0);
  return res;
}

double sample_mean(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values)
    if (!is_missing(v)) {
      sum += v;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : missing_value();
}

double sample_sd(std::span<const double> values) {
  const double m = sample_mean(values);
  double ss = 0.0;
  std::size_t n = 0;
  for (double v : values)
    if (!is_missing(v)) {
      ss += (v - m) * (v - m);
      ++n;
    }
  return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : missing_value();
}

double sample_quantile(std::vector<double> values, double q) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return is_missing(v); }),
               values.end());
  if (values.empty())
    throw Error(ErrorCategory::data, "domain: quantile of empty sample");
  std::sort(values.begin(), values.end());
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

} // namespace hhmm
