#include "hhmm/markov.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hhmm {

TransitionMatrix TransitionMatrix::from_rows(
    const std::vector<std::vector<double>> &rows, double row_sum_tol) {
  const int n = static_cast<int>(rows.size());
  if (n == 0)
    throw Error(ErrorCategory::data, "invalid-parameter: empty t.p.m.");
  TransitionMatrix g;
  g.n_ = n;
  g.p_.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != n)
      throw Error(ErrorCategory::data, "invalid-parameter: t.p.m. must be square");
    double sum = 0.0;
    for (double v : rows[i]) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0 + row_sum_tol)
        throw Error(ErrorCategory::data,
                    "invalid-parameter: t.p.m. entries must lie in [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > row_sum_tol) {
      std::ostringstream msg;
      msg << "invalid-parameter: t.p.m. row " << i + 1 << " sums to " << sum;
      throw Error(ErrorCategory::data, msg.str());
    }
    for (int j = 0; j < n; ++j) g.p_[i * n + j] = rows[i][j] / sum;
  }
  return g;
}

TransitionMatrix TransitionMatrix::uniform(int n) {
  if (n <= 0)
    throw Error(ErrorCategory::data, "invalid-parameter: t.p.m. needs n >= 1");
  TransitionMatrix g;
  g.n_ = n;
  g.p_.assign(static_cast<std::size_t>(n) * n, 1.0 / n);
  return g;
}

std::vector<double> softmax(std::span<const double> eta) {
  double m = -std::numeric_limits<double>::infinity();
  for (double e : eta) m = std::max(m, e);
  std::vector<double> out(eta.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    out[i] = std::exp(eta[i] - m);
    sum += out[i];
  }
  for (double &v : out) v /= sum;
  return out;
}

TransitionMatrix working_to_natural(const WorkingTpm &w) {
  const int n = w.n;
  if (n <= 0 || static_cast<int>(w.betas.size()) != n * (n - 1))
    throw Error(ErrorCategory::data,
                "invalid-parameter: working t.p.m. needs n*(n-1) betas");
  for (double b : w.betas)
    if (!std::isfinite(b))
      throw Error(ErrorCategory::data,
                  "invalid-parameter: working t.p.m. betas must be finite");
  std::vector<std::vector<double>> rows(n, std::vector<double>(n));
  std::size_t idx = 0;
  std::vector<double> eta(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) eta[j] = (i == j) ? 0.0 : w.betas[idx++];
    rows[i] = softmax(eta);
  }
  return TransitionMatrix::from_rows(rows, 1e-9);
}

WorkingTpm natural_to_working(const TransitionMatrix &g, double floor,
                              Warnings *warnings) {
  const int n = g.size();
  WorkingTpm w;
  w.n = n;
  w.betas.reserve(static_cast<std::size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    const double diag = g(i, i);
    if (diag <= 0.0) {
      std::ostringstream msg;
      msg << "invalid-parameter: t.p.m. diagonal entry (" << i + 1 << ","
          << i + 1 << ") is zero; the logit link needs a positive reference";
      throw Error(ErrorCategory::data, msg.str());
    }
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double p = g(i, j);
      if (p <= floor) {
        std::ostringstream msg;
        msg << "t.p.m. entry (" << i + 1 << "," << j + 1 << ") = " << p
            << " clamped to " << floor << " for the logit link";
        warn(warnings, msg.str());
        p = floor;
      }
      w.betas.push_back(std::log(p) - std::log(diag));
    }
  }
  return w;
}

std::vector<double> stationary_distribution(const TransitionMatrix &g) {
  const int n = g.size();
  // M = (I - Gamma)^T with the last stationarity equation replaced by the
  // normalization sum(delta) = 1; solve M delta = e_n by Gaussian
  // elimination with partial pivoting.
  std::vector<double> m(static_cast<std::size_t>(n) * n);
  std::vector<double> rhs(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m[i * n + j] = (i == j ? 1.0 : 0.0) - g(j, i);
  for (int j = 0; j < n; ++j) m[(n - 1) * n + j] = 1.0;
  rhs[n - 1] = 1.0;

  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
    if (std::abs(m[piv * n + col]) < 1e-12)
      throw Error(ErrorCategory::numeric,
                  "no-unique-stationary: chain has no unique stationary "
                  "distribution (reducible or degenerate)");
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(m[piv * n + j], m[col * n + j]);
      std::swap(rhs[piv], rhs[col]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double f = m[r * n + col] / m[col * n + col];
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) m[r * n + j] -= f * m[col * n + j];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> delta(n);
  for (int r = n - 1; r >= 0; --r) {
    double v = rhs[r];
    for (int j = r + 1; j < n; ++j) v -= m[r * n + j] * delta[j];
    delta[r] = v / m[r * n + r];
  }
  double sum = 0.0;
  for (double &d : delta) {
    if (d < 0.0) {
      if (d < -1e-9)
        throw Error(ErrorCategory::numeric,
                    "no-unique-stationary: solution has negative entries");
      d = 0.0;
    }
    sum += d;
  }
  for (double &d : delta) d /= sum;
  return delta;
}

InitialDistribution InitialDistribution::estimated(std::vector<double> logits) {
  for (double v : logits)
    if (!std::isfinite(v))
      throw Error(ErrorCategory::data,
                  "invalid-parameter: initial-distribution logits must be finite");
  return {Policy::Estimated, std::move(logits)};
}

InitialDistribution InitialDistribution::fixed(std::vector<double> probs) {
  double sum = 0.0;
  for (double v : probs) {
    if (!std::isfinite(v) || v < 0.0)
      throw Error(ErrorCategory::data,
                  "invalid-parameter: fixed initial distribution must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error(ErrorCategory::data,
                "invalid-parameter: fixed initial distribution must sum to 1");
  return {Policy::Fixed, std::move(probs)};
}

std::vector<double> realize_initial(const InitialDistribution &policy,
                                    const TransitionMatrix &g) {
  const int n = g.size();
  switch (policy.policy) {
    case InitialDistribution::Policy::Stationary:
      return stationary_distribution(g);
    case InitialDistribution::Policy::Estimated: {
      if (static_cast<int>(policy.params.size()) != n - 1)
        throw Error(ErrorCategory::data,
                    "invalid-parameter: estimated initial distribution needs "
                    "n-1 logits");
      std::vector<double> eta(n, 0.0); // state 1 is the reference
      for (int i = 1; i < n; ++i) eta[i] = policy.params[i - 1];
      return softmax(eta);
    }
    case InitialDistribution::Policy::Fixed: {
      if (static_cast<int>(policy.params.size()) != n)
        throw Error(ErrorCategory::data,
                    "invalid-parameter: fixed initial distribution has wrong length");
      return policy.params;
    }
  }
  throw Error(ErrorCategory::data, "invalid-parameter: unknown initial policy");
}

} // namespace hhmm
