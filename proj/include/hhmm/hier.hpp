#ifndef HHMM_HIER_HPP
#define HHMM_HIER_HPP

#include "hhmm/hmm.hpp"

#include <utility>
#include <vector>

namespace hhmm {

// Hierarchically structured HMM: a K-state internal chain over segments
// selects which of K production-level HMMs generates each segment. The
// production chains share one emission model by default (share_emissions)
// and differ in their t.p.m.s and initial distributions.
//
// Segment boundaries break production-level dependence: each segment's
// likelihood is a standalone forward likelihood under the chain its
// internal state selects, re-initialized from that chain's initial
// distribution.
struct HierarchicalModel {
  TransitionMatrix internal_tpm;       // K x K
  InitialDistribution internal_initial;
  std::vector<HmmParams> production;   // K chains of N states each
  bool share_emissions = true;

  int k_internal() const { return internal_tpm.size(); }
  int n_production() const {
    return production.empty() ? 0 : production[0].n_states();
  }
  const EmissionModel &emissions(int k) const { return *production[k].emissions; }
  void validate() const;
};

// Internal state per segment plus production state per observation.
struct DecodedStates {
  std::vector<int> internal;                // M entries in [0, K)
  std::vector<std::vector<int>> production; // per segment, entries in [0, N)
};

// Per-internal-state segment log-likelihoods: entry k is the forward
// log-likelihood of the segment under production chain k. This is the log
// of the diagonal of the segment likelihood matrix.
std::vector<double> segment_likelihood_matrix(const HierarchicalModel &model,
                                              const ObservationSeries &segment);

// Log-likelihood of the full hierarchical model: an outer forward
// recursion over segments whose emission terms are the segment
// log-likelihoods. Cost is linear in M and in the total number of
// observations. Sums over replicate groups (the internal chain restarts
// at each group boundary).
double hierarchical_log_likelihood(const HierarchicalModel &model,
                                   const SegmentedSeries &data);

// Global decoding of the internal states (outer Viterbi, per group).
std::vector<int> viterbi_internal(const HierarchicalModel &model,
                                  const SegmentedSeries &data);

// Production-level Viterbi per segment, conditional on the given internal
// states; packages the full two-level decoding.
DecodedStates viterbi_production_given_internal(const HierarchicalModel &model,
                                                const SegmentedSeries &data,
                                                std::span<const int> internal);

// Two-stage global decoding (outer Viterbi, then conditional inner
// Viterbi per segment).
DecodedStates decode(const HierarchicalModel &model, const SegmentedSeries &data);

// Generative counterpart: draws internal states for the requested segment
// lengths, then each segment from the selected production chain.
std::pair<DecodedStates, SegmentedSeries>
simulate_hierarchical(const HierarchicalModel &model,
                      std::span<const int> segment_lengths, Rng &rng);

// Pseudo-residuals at the production level conditional on the decoded
// states: per observation and variable, the normal quantile of the
// state-conditional cumulative probability.
std::vector<std::vector<double>>
hierarchical_pseudo_residuals(const HierarchicalModel &model,
                              const SegmentedSeries &data,
                              const DecodedStates &decoded, Rng &rng,
                              Warnings *warnings = nullptr);

// Number of independently estimated parameters implied by the model's
// policies (stationary initials contribute zero).
int count_parameters(const HierarchicalModel &model);

} // namespace hhmm

#endif
