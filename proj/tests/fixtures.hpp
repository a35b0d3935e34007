#ifndef HHMM_TESTS_FIXTURES_HPP
#define HHMM_TESTS_FIXTURES_HPP

#include "hhmm/hier.hpp"
#include "hhmm/rng.hpp"

#include <memory>
#include <vector>

// Reference models used across the test binaries. The porpoise fixture is
// a two-regime dive model (K=2 internal states selecting between N=3 dive
// types, stationary initials); the snake fixture is a three-regime
// movement model (K=3, N=3) whose initial distributions are free vectors.
// Their stationary distributions are known to three decimals.
namespace fixtures {

inline hhmm::TransitionMatrix porpoise_internal() {
  return hhmm::TransitionMatrix::from_rows({{0.789, 0.211},
                                            {0.219, 0.781}});
}

inline hhmm::TransitionMatrix porpoise_production(int k) {
  if (k == 0)
    return hhmm::TransitionMatrix::from_rows({{0.406, 0.443, 0.150},
                                              {0.240, 0.600, 0.159},
                                              {0.196, 0.366, 0.437}});
  return hhmm::TransitionMatrix::from_rows({{0.277, 0.153, 0.570},
                                            {0.124, 0.248, 0.628},
                                            {0.057, 0.087, 0.856}});
}

inline std::vector<double> porpoise_stationary_internal() {
  return {0.509, 0.491};
}

inline std::vector<double> porpoise_stationary_production(int k) {
  if (k == 0) return {0.277, 0.506, 0.217};
  return {0.083, 0.110, 0.807};
}

inline hhmm::TransitionMatrix snake_internal() {
  return hhmm::TransitionMatrix::from_rows({{0.166, 0.578, 0.256},
                                            {0.680, 0.226, 0.095},
                                            {0.157, 0.208, 0.635}});
}

inline std::vector<double> snake_initial_internal() {
  return {0.903, 0.072, 0.025};
}

// Production chain k of the snake fixture; rows contain boundary estimates
// (entries of exactly 0) that exercise the working-scale clamp.
inline hhmm::TransitionMatrix snake_production(int k) {
  if (k == 0)
    return hhmm::TransitionMatrix::from_rows({{0.947, 0.047, 0.006},
                                              {0.018, 0.919, 0.063},
                                              {0.000, 0.244, 0.756}});
  if (k == 1)
    return hhmm::TransitionMatrix::from_rows({{0.806, 0.144, 0.050},
                                              {0.019, 0.657, 0.324},
                                              {0.000, 0.185, 0.815}});
  return hhmm::TransitionMatrix::from_rows({{0.994, 0.006, 0.000},
                                            {0.003, 0.997, 0.000},
                                            {0.000, 0.018, 0.982}});
}

inline std::vector<double> snake_initial_production(int k) {
  if (k == 0) return {0.413, 0.103, 0.484};
  if (k == 1) return {0.087, 0.024, 0.889};
  return {0.315, 0.442, 0.243};
}

// Snake step-length means on the transformed scale, states 1..3.
inline std::vector<double> snake_step_means() { return {0.0148, 0.459, 1.891}; }

// One gamma-emission variable with the given per-state moments.
inline std::shared_ptr<const hhmm::EmissionModel>
gamma_emissions(const std::vector<double> &means, const std::vector<double> &sds,
                const std::string &name = "y") {
  hhmm::EmissionVariable var;
  var.name = name;
  for (std::size_t i = 0; i < means.size(); ++i)
    var.by_state.push_back(hhmm::from_mean_sd(means[i], sds[i]));
  auto em = std::make_shared<hhmm::EmissionModel>();
  em->variables.push_back(std::move(var));
  return em;
}

inline hhmm::HmmParams make_hmm(hhmm::TransitionMatrix tpm,
                                hhmm::InitialDistribution initial,
                                std::shared_ptr<const hhmm::EmissionModel> em) {
  hhmm::HmmParams p;
  p.tpm = std::move(tpm);
  p.initial = std::move(initial);
  p.emissions = std::move(em);
  return p;
}

// Porpoise-shaped model with well-separated single-variable gamma
// emissions; the truth model for recovery and decoding-accuracy checks.
inline hhmm::HierarchicalModel porpoise_model() {
  hhmm::HierarchicalModel model;
  model.internal_tpm = porpoise_internal();
  model.internal_initial = hhmm::InitialDistribution::stationary();
  auto em = gamma_emissions({1.0, 5.0, 12.0}, {0.4, 1.0, 2.0});
  for (int k = 0; k < 2; ++k)
    model.production.push_back(make_hmm(porpoise_production(k),
                                        hhmm::InitialDistribution::stationary(),
                                        em));
  return model;
}

// Snake-shaped model with fixed initial vectors at both levels.
inline hhmm::HierarchicalModel snake_model() {
  hhmm::HierarchicalModel model;
  model.internal_tpm = snake_internal();
  model.internal_initial =
      hhmm::InitialDistribution::fixed(snake_initial_internal());
  auto em = gamma_emissions(snake_step_means(), {0.01, 0.2, 0.487}, "step");
  for (int k = 0; k < 3; ++k)
    model.production.push_back(
        make_hmm(snake_production(k),
                 hhmm::InitialDistribution::fixed(snake_initial_production(k)),
                 em));
  return model;
}

// Random row-stochastic matrix via the working-scale map.
inline hhmm::TransitionMatrix random_tpm(hhmm::Rng &rng, int n,
                                         double beta_sd = 1.0) {
  hhmm::WorkingTpm w;
  w.n = n;
  for (int i = 0; i < n * (n - 1); ++i) w.betas.push_back(beta_sd * rng.normal());
  return hhmm::working_to_natural(w);
}

// Random emission model: gamma cells with spread-out moments, so random
// models stay numerically comfortable for enumeration-sized data.
inline std::shared_ptr<const hhmm::EmissionModel>
random_emissions(hhmm::Rng &rng, int n_states, int n_vars) {
  auto em = std::make_shared<hhmm::EmissionModel>();
  for (int r = 0; r < n_vars; ++r) {
    hhmm::EmissionVariable var;
    var.name = "v" + std::to_string(r + 1);
    for (int i = 0; i < n_states; ++i) {
      const double mean = 0.5 + 4.0 * rng.uniform() + 3.0 * i;
      const double sd = 0.3 + rng.uniform();
      var.by_state.push_back(hhmm::from_mean_sd(mean, sd));
    }
    em->variables.push_back(std::move(var));
  }
  return em;
}

inline hhmm::HmmParams random_hmm(hhmm::Rng &rng, int n_states, int n_vars) {
  return make_hmm(random_tpm(rng, n_states),
                  hhmm::InitialDistribution::stationary(),
                  random_emissions(rng, n_states, n_vars));
}

inline hhmm::HierarchicalModel random_hierarchical(hhmm::Rng &rng, int k, int n,
                                                   int n_vars) {
  hhmm::HierarchicalModel model;
  model.internal_tpm = random_tpm(rng, k);
  model.internal_initial = hhmm::InitialDistribution::stationary();
  auto em = random_emissions(rng, n, n_vars);
  for (int c = 0; c < k; ++c)
    model.production.push_back(
        make_hmm(random_tpm(rng, n), hhmm::InitialDistribution::stationary(), em));
  return model;
}

// Positive observations with a bit of spread; valid under gamma emissions.
inline hhmm::ObservationSeries random_series(hhmm::Rng &rng, int t_len,
                                             int n_vars) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(t_len) * n_vars);
  for (int t = 0; t < t_len; ++t)
    for (int r = 0; r < n_vars; ++r) values.push_back(rng.gamma(2.0, 0.5));
  return hhmm::ObservationSeries(n_vars, std::move(values));
}

inline hhmm::SegmentedSeries make_segmented(std::vector<hhmm::ObservationSeries> segments,
                                            const std::vector<std::string> &names) {
  hhmm::SegmentedSeries data;
  data.variable_names = names;
  for (std::size_t m = 0; m < segments.size(); ++m) {
    data.segments.push_back(std::move(segments[m]));
    data.segment_labels.push_back("s" + std::to_string(m + 1));
    data.group_of_segment.push_back(0);
  }
  return data;
}

inline hhmm::SegmentedSeries random_segmented(hhmm::Rng &rng,
                                              const std::vector<int> &lengths,
                                              int n_vars) {
  std::vector<hhmm::ObservationSeries> segs;
  segs.reserve(lengths.size());
  for (int t_len : lengths) segs.push_back(random_series(rng, t_len, n_vars));
  std::vector<std::string> names;
  for (int r = 0; r < n_vars; ++r) names.push_back("v" + std::to_string(r + 1));
  return make_segmented(std::move(segs), names);
}

} // namespace fixtures

#endif
