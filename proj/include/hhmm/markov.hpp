#ifndef HHMM_MARKOV_HPP
#define HHMM_MARKOV_HPP

#include "hhmm/common.hpp"

#include <span>
#include <vector>

namespace hhmm {

// Row-stochastic transition matrix. Construction normalizes each row and
// rejects rows whose sum is off by more than row_sum_tol, so the stored
// rows always sum to 1 to machine precision.
class TransitionMatrix {
public:
  TransitionMatrix() = default;

  static TransitionMatrix from_rows(const std::vector<std::vector<double>> &rows,
                                    double row_sum_tol = 0.01);
  static TransitionMatrix uniform(int n);

  int size() const { return n_; }
  double operator()(int i, int j) const { return p_[i * n_ + j]; }
  std::span<const double> row(int i) const { return {p_.data() + i * n_, static_cast<std::size_t>(n_)}; }
  const std::vector<double> &data() const { return p_; }

private:
  int n_ = 0;
  std::vector<double> p_; // row-major
};

// Multinomial-logit working twin of a t.p.m.: one unconstrained beta per
// off-diagonal cell (row-major order), with the diagonal as the reference
// category (eta_ii = 0).
struct WorkingTpm {
  int n = 0;
  std::vector<double> betas; // n*(n-1)
};

// Numerically shifted softmax: out[i] = exp(eta[i]) / sum_j exp(eta[j]).
// Shift-invariant: adding a constant to every eta leaves the result
// unchanged (bit-for-bit when the additions are exact).
std::vector<double> softmax(std::span<const double> eta);

// gamma_ij proportional to exp(beta_ij) off-diagonal, exp(0) on the
// diagonal. Any finite input yields a valid row-stochastic matrix.
TransitionMatrix working_to_natural(const WorkingTpm &w);

// beta_ij = log(gamma_ij / gamma_ii). Entries at or below `floor` are
// clamped to `floor` (a warning is recorded) so the log stays finite; a
// zero diagonal entry is a hard error.
constexpr double kTpmFloor = 1e-10;
WorkingTpm natural_to_working(const TransitionMatrix &g,
                              double floor = kTpmFloor,
                              Warnings *warnings = nullptr);

// Solves delta^T Gamma = delta^T with sum(delta) = 1 as a linear system
// (one stationarity equation replaced by the normalization). Throws
// no-unique-stationary when the chain has no unique stationary
// distribution.
std::vector<double> stationary_distribution(const TransitionMatrix &g);

// Initial-distribution policy for a chain. Stationary derives the vector
// from the t.p.m.; Estimated stores n-1 working logits (state 1 is the
// reference category); Fixed stores the vector itself.
struct InitialDistribution {
  enum class Policy { Stationary, Estimated, Fixed };
  Policy policy = Policy::Stationary;
  std::vector<double> params; // logits (n-1) for Estimated, probs (n) for Fixed

  static InitialDistribution stationary() { return {}; }
  static InitialDistribution estimated(std::vector<double> logits);
  static InitialDistribution fixed(std::vector<double> probs);
};

// Realizes the policy into a probability vector for a chain with t.p.m. g.
std::vector<double> realize_initial(const InitialDistribution &policy,
                                    const TransitionMatrix &g);

} // namespace hhmm

#endif
