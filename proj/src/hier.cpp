#include "hhmm/hier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hhmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Realized initial distributions of all production chains, computed once.
std::vector<std::vector<double>> production_deltas(const HierarchicalModel &m) {
  std::vector<std::vector<double>> deltas;
  deltas.reserve(m.production.size());
  for (const auto &chain : m.production)
    deltas.push_back(realize_initial(chain.initial, chain.tpm));
  return deltas;
}

// K inner log-likelihoods for one segment. With a shared emission model
// the state log-density matrix is evaluated once and reused by all K
// forward passes.
std::vector<double> segment_loglik(const HierarchicalModel &model,
                                   const ObservationSeries &segment,
                                   const std::vector<std::vector<double>> &deltas,
                                   int segment_index) {
  const int k = model.k_internal();
  std::vector<double> out(k);
  try {
    if (model.share_emissions) {
      const auto dens = state_log_density_matrix(model.emissions(0), segment);
      for (int i = 0; i < k; ++i)
        out[i] = forward_log_likelihood(model.production[i].tpm, deltas[i],
                                        dens, segment.length(),
                                        model.n_production());
    } else {
      for (int i = 0; i < k; ++i) {
        const auto dens = state_log_density_matrix(model.emissions(i), segment);
        out[i] = forward_log_likelihood(model.production[i].tpm, deltas[i],
                                        dens, segment.length(),
                                        model.n_production());
      }
    }
  } catch (const Error &e) {
    std::ostringstream msg;
    msg << e.what() << " (segment " << segment_index + 1 << ")";
    throw Error(e.category(), msg.str());
  }
  return out;
}

// M x K matrix of segment log-likelihoods for a run of segments.
std::vector<double> segment_loglik_block(const HierarchicalModel &model,
                                         const SegmentedSeries &data,
                                         const std::vector<std::vector<double>> &deltas,
                                         int begin, int end) {
  const int k = model.k_internal();
  std::vector<double> block(static_cast<std::size_t>(end - begin) * k);
  for (int m = begin; m < end; ++m) {
    const auto ll = segment_loglik(model, data.segments[m], deltas, m);
    std::copy(ll.begin(), ll.end(),
              block.begin() + static_cast<std::size_t>(m - begin) * k);
  }
  return block;
}

} // namespace

void HierarchicalModel::validate() const {
  const int k = k_internal();
  if (k < 1 || static_cast<int>(production.size()) != k)
    throw Error(ErrorCategory::data,
                "invalid-parameter: need one production chain per internal state");
  const int n = n_production();
  for (const auto &chain : production) {
    chain.validate();
    if (chain.n_states() != n)
      throw Error(ErrorCategory::data,
                  "invalid-parameter: production chains disagree on N");
  }
  if (share_emissions) {
    for (const auto &chain : production)
      if (chain.emissions != production[0].emissions)
        throw Error(ErrorCategory::data,
                    "invalid-parameter: share_emissions set but chains hold "
                    "different emission models");
  }
}

std::vector<double> segment_likelihood_matrix(const HierarchicalModel &model,
                                              const ObservationSeries &segment) {
  model.validate();
  if (segment.length() < 1)
    throw Error(ErrorCategory::data, "validation: empty segment");
  return segment_loglik(model, segment, production_deltas(model), 0);
}

double hierarchical_log_likelihood(const HierarchicalModel &model,
                                   const SegmentedSeries &data) {
  model.validate();
  data.validate();
  const int k = model.k_internal();
  const auto deltas = production_deltas(model);
  const auto internal_delta = realize_initial(model.internal_initial,
                                              model.internal_tpm);

  double total = 0.0;
  for (const auto &[begin, end] : data.group_ranges()) {
    const auto block = segment_loglik_block(model, data, deltas, begin, end);
    total += forward_log_likelihood(model.internal_tpm, internal_delta, block,
                                    end - begin, k);
  }
  return total;
}

std::vector<int> viterbi_internal(const HierarchicalModel &model,
                                  const SegmentedSeries &data) {
  model.validate();
  data.validate();
  const int k = model.k_internal();
  const auto deltas = production_deltas(model);
  const auto internal_delta = realize_initial(model.internal_initial,
                                              model.internal_tpm);

  std::vector<int> internal(data.m_segments());
  for (const auto &[begin, end] : data.group_ranges()) {
    const auto block = segment_loglik_block(model, data, deltas, begin, end);
    const auto path = viterbi(model.internal_tpm, internal_delta, block,
                              end - begin, k);
    std::copy(path.begin(), path.end(), internal.begin() + begin);
  }
  return internal;
}

DecodedStates viterbi_production_given_internal(const HierarchicalModel &model,
                                                const SegmentedSeries &data,
                                                std::span<const int> internal) {
  model.validate();
  data.validate();
  if (static_cast<int>(internal.size()) != data.m_segments())
    throw Error(ErrorCategory::data,
                "validation: internal state sequence length mismatch");
  const auto deltas = production_deltas(model);

  DecodedStates decoded;
  decoded.internal.assign(internal.begin(), internal.end());
  decoded.production.reserve(data.m_segments());
  for (int m = 0; m < data.m_segments(); ++m) {
    const int h = internal[m];
    if (h < 0 || h >= model.k_internal())
      throw Error(ErrorCategory::data, "validation: internal state out of range");
    const auto &segment = data.segments[m];
    try {
      const auto dens = state_log_density_matrix(model.emissions(h), segment);
      decoded.production.push_back(viterbi(model.production[h].tpm, deltas[h],
                                           dens, segment.length(),
                                           model.n_production()));
    } catch (const Error &e) {
      std::ostringstream msg;
      msg << e.what() << " (segment " << m + 1 << ")";
      throw Error(e.category(), msg.str());
    }
  }
  return decoded;
}

DecodedStates decode(const HierarchicalModel &model, const SegmentedSeries &data) {
  return viterbi_production_given_internal(model, data,
                                           viterbi_internal(model, data));
}

std::pair<DecodedStates, SegmentedSeries>
simulate_hierarchical(const HierarchicalModel &model,
                      std::span<const int> segment_lengths, Rng &rng) {
  model.validate();
  if (segment_lengths.empty())
    throw Error(ErrorCategory::data, "validation: need at least one segment");
  for (int len : segment_lengths)
    if (len < 1)
      throw Error(ErrorCategory::data,
                  "validation: segment lengths must be >= 1");
  const auto internal_delta = realize_initial(model.internal_initial,
                                              model.internal_tpm);

  DecodedStates truth;
  SegmentedSeries data;
  data.variable_names.reserve(model.emissions(0).n_vars());
  for (const auto &var : model.emissions(0).variables)
    data.variable_names.push_back(var.name);

  int prev = -1;
  for (std::size_t m = 0; m < segment_lengths.size(); ++m) {
    const int h = (m == 0) ? rng.categorical(internal_delta)
                           : rng.categorical(model.internal_tpm.row(prev));
    prev = h;
    auto [states, series] =
        simulate(model.production[h], segment_lengths[m], rng);
    truth.internal.push_back(h);
    truth.production.push_back(std::move(states));
    data.segments.push_back(std::move(series));
    data.segment_labels.push_back(std::to_string(m + 1));
  }
  return {std::move(truth), std::move(data)};
}

std::vector<std::vector<double>>
hierarchical_pseudo_residuals(const HierarchicalModel &model,
                              const SegmentedSeries &data,
                              const DecodedStates &decoded, Rng &rng,
                              Warnings *warnings) {
  model.validate();
  data.validate();
  if (static_cast<int>(decoded.internal.size()) != data.m_segments() ||
      decoded.production.size() != decoded.internal.size())
    throw Error(ErrorCategory::data, "validation: decoded states shape mismatch");
  std::vector<std::vector<double>> out;
  out.reserve(data.m_segments());
  for (int m = 0; m < data.m_segments(); ++m) {
    const int h = decoded.internal[m];
    out.push_back(pseudo_residuals(model.production[h], data.segments[m],
                                   decoded.production[m], rng, warnings));
  }
  return out;
}

int count_parameters(const HierarchicalModel &model) {
  const int k = model.k_internal();
  const int n = model.n_production();
  int count = k * (k - 1);
  if (model.internal_initial.policy == InitialDistribution::Policy::Estimated)
    count += k - 1;
  count += k * n * (n - 1);
  for (const auto &chain : model.production)
    if (chain.initial.policy == InitialDistribution::Policy::Estimated)
      count += n - 1;
  int emission_params = 0;
  for (const auto &var : model.emissions(0).variables)
    emission_params += n * n_working_params(family_of(var.by_state[0]));
  count += model.share_emissions ? emission_params : k * emission_params;
  return count;
}

} // namespace hhmm
