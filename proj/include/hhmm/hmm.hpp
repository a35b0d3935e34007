#ifndef HHMM_HMM_HPP
#define HHMM_HMM_HPP

#include "hhmm/distributions.hpp"
#include "hhmm/markov.hpp"
#include "hhmm/series.hpp"

#include <memory>
#include <utility>
#include <vector>

namespace hhmm {

// One production-level HMM: N states, t.p.m., initial-distribution policy
// and a (possibly shared) emission model.
struct HmmParams {
  TransitionMatrix tpm;
  InitialDistribution initial;
  std::shared_ptr<const EmissionModel> emissions;

  int n_states() const { return tpm.size(); }
  void validate() const;
};

// T x N matrix (row-major) of state log-densities log f_i(y_t). Computed
// once per series and shared by the forward, Viterbi and hierarchical
// recursions, so shared emission models are only evaluated once.
std::vector<double> state_log_density_matrix(const EmissionModel &emissions,
                                             const ObservationSeries &series);

// Forward recursion on a precomputed log-density matrix. delta is the
// realized initial distribution. Underflow-safe via per-step scaling with
// the running log-scale accumulated into the result; cost is linear in T.
double forward_log_likelihood(const TransitionMatrix &tpm,
                              std::span<const double> delta,
                              std::span<const double> log_dens, int t_len,
                              int n_states);

// Log-likelihood of one series under the model (the matrix-product form,
// evaluated by the scaled forward algorithm).
double forward_log_likelihood(const HmmParams &params,
                              const ObservationSeries &series);

// Most probable joint state sequence (0-based states), computed in log
// space; ties break toward the lowest state index.
std::vector<int> viterbi(const TransitionMatrix &tpm,
                         std::span<const double> delta,
                         std::span<const double> log_dens, int t_len,
                         int n_states);
std::vector<int> viterbi(const HmmParams &params,
                         const ObservationSeries &series);

// Draws a state path and observations from the model. Deterministic for a
// fixed rng stream.
std::pair<std::vector<int>, ObservationSeries> simulate(const HmmParams &params,
                                                        int t_len, Rng &rng);

// Normal pseudo-residuals conditional on the supplied decoded states:
// r_{tr} = Phi^{-1}(F_{s_t}(y_{tr})). The point mass of the zero-inflated
// family is handled by randomized residuals (uniform draw on the mass
// interval, taken from rng). Missing observations yield NaN residuals.
// Cumulative probabilities of exactly 0 or 1 are clamped to
// [1e-12, 1 - 1e-12] and a warning is recorded.
std::vector<double> pseudo_residuals(const HmmParams &params,
                                     const ObservationSeries &series,
                                     std::span<const int> decoded, Rng &rng,
                                     Warnings *warnings = nullptr);

// AIC/BIC from a fitted log-likelihood.
struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};
InformationCriteria information_criteria(double loglik, int n_params,
                                         long n_obs);

} // namespace hhmm

#endif
