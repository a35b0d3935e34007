#include "hhmm/hmm.hpp"

#include "hhmm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hhmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCdfFloor = 1e-12;

void throw_underflow(int t) {
  std::ostringstream msg;
  msg << "likelihood-underflow: observation " << t + 1
      << " has zero density in every state";
  throw Error(ErrorCategory::numeric, msg.str());
}

} // namespace

void HmmParams::validate() const {
  if (!emissions)
    throw Error(ErrorCategory::data, "invalid-parameter: missing emission model");
  emissions->validate();
  if (emissions->n_states() != tpm.size())
    throw Error(ErrorCategory::data,
                "invalid-parameter: emission model and t.p.m. disagree on N");
}

std::vector<double> state_log_density_matrix(const EmissionModel &emissions,
                                             const ObservationSeries &series) {
  const int t_len = series.length();
  const int n = emissions.n_states();
  if (series.n_vars != emissions.n_vars())
    throw Error(ErrorCategory::data,
                "validation: series and emission model disagree on R");
  std::vector<double> dens(static_cast<std::size_t>(t_len) * n);
  for (int t = 0; t < t_len; ++t) {
    const auto row = series.row(t);
    for (int i = 0; i < n; ++i)
      dens[static_cast<std::size_t>(t) * n + i] =
          emissions.state_log_density(i, row);
  }
  return dens;
}

double forward_log_likelihood(const TransitionMatrix &tpm,
                              std::span<const double> delta,
                              std::span<const double> log_dens, int t_len,
                              int n_states) {
  const int n = n_states;
  std::vector<double> phi(n), next(n), w(n);
  double loglik = 0.0;
  for (int t = 0; t < t_len; ++t) {
    double m = -kInf;
    for (int j = 0; j < n; ++j) {
      double u;
      if (t == 0) {
        u = delta[j];
      } else {
        u = 0.0;
        for (int i = 0; i < n; ++i) u += phi[i] * tpm(i, j);
      }
      w[j] = (u > 0.0 ? std::log(u) : -kInf) +
             log_dens[static_cast<std::size_t>(t) * n + j];
      m = std::max(m, w[j]);
    }
    if (m == -kInf) throw_underflow(t);
    double scale = 0.0;
    for (int j = 0; j < n; ++j) {
      next[j] = std::exp(w[j] - m);
      scale += next[j];
    }
    for (int j = 0; j < n; ++j) phi[j] = next[j] / scale;
    loglik += m + std::log(scale);
  }
  return loglik;
}

double forward_log_likelihood(const HmmParams &params,
                              const ObservationSeries &series) {
  params.validate();
  if (series.length() < 1)
    throw Error(ErrorCategory::data, "validation: empty observation series");
  const auto delta = realize_initial(params.initial, params.tpm);
  const auto dens = state_log_density_matrix(*params.emissions, series);
  return forward_log_likelihood(params.tpm, delta, dens, series.length(),
                                params.n_states());
}

std::vector<int> viterbi(const TransitionMatrix &tpm,
                         std::span<const double> delta,
                         std::span<const double> log_dens, int t_len,
                         int n_states) {
  const int n = n_states;
  std::vector<double> log_tpm(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      log_tpm[i * n + j] = tpm(i, j) > 0.0 ? std::log(tpm(i, j)) : -kInf;

  std::vector<double> score(n), next(n);
  std::vector<int> back(static_cast<std::size_t>(t_len) * n, 0);
  bool all_inf = true;
  for (int j = 0; j < n; ++j) {
    score[j] = (delta[j] > 0.0 ? std::log(delta[j]) : -kInf) + log_dens[j];
    if (score[j] > -kInf) all_inf = false;
  }
  if (all_inf) throw_underflow(0);

  for (int t = 1; t < t_len; ++t) {
    all_inf = true;
    for (int j = 0; j < n; ++j) {
      double best = -kInf;
      int arg = 0;
      for (int i = 0; i < n; ++i) {
        const double s = score[i] + log_tpm[i * n + j];
        if (s > best) { // strict: lowest index wins ties
          best = s;
          arg = i;
        }
      }
      next[j] = best + log_dens[static_cast<std::size_t>(t) * n + j];
      back[static_cast<std::size_t>(t) * n + j] = arg;
      if (next[j] > -kInf) all_inf = false;
    }
    if (all_inf) throw_underflow(t);
    score = next;
  }

  std::vector<int> path(t_len);
  int best_state = 0;
  for (int j = 1; j < n; ++j)
    if (score[j] > score[best_state]) best_state = j;
  path[t_len - 1] = best_state;
  for (int t = t_len - 1; t > 0; --t)
    path[t - 1] = back[static_cast<std::size_t>(t) * n + path[t]];
  return path;
}

std::vector<int> viterbi(const HmmParams &params,
                         const ObservationSeries &series) {
  params.validate();
  if (series.length() < 1)
    throw Error(ErrorCategory::data, "validation: empty observation series");
  const auto delta = realize_initial(params.initial, params.tpm);
  const auto dens = state_log_density_matrix(*params.emissions, series);
  return viterbi(params.tpm, delta, dens, series.length(), params.n_states());
}

std::pair<std::vector<int>, ObservationSeries> simulate(const HmmParams &params,
                                                        int t_len, Rng &rng) {
  params.validate();
  if (t_len < 1)
    throw Error(ErrorCategory::data, "validation: simulation length must be >= 1");
  const auto delta = realize_initial(params.initial, params.tpm);
  const int r = params.emissions->n_vars();

  std::vector<int> states(t_len);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(t_len) * r);
  for (int t = 0; t < t_len; ++t) {
    states[t] = (t == 0) ? rng.categorical(delta)
                         : rng.categorical(params.tpm.row(states[t - 1]));
    const auto row = params.emissions->sample_row(states[t], rng);
    values.insert(values.end(), row.begin(), row.end());
  }
  return {std::move(states), ObservationSeries(r, std::move(values))};
}

std::vector<double> pseudo_residuals(const HmmParams &params,
                                     const ObservationSeries &series,
                                     std::span<const int> decoded, Rng &rng,
                                     Warnings *warnings) {
  params.validate();
  const int t_len = series.length();
  const int r_vars = series.n_vars;
  if (static_cast<int>(decoded.size()) != t_len)
    throw Error(ErrorCategory::data,
                "validation: decoded state sequence length mismatch");
  if (r_vars != params.emissions->n_vars())
    throw Error(ErrorCategory::data,
                "validation: series and emission model disagree on R");

  std::vector<double> residuals(static_cast<std::size_t>(t_len) * r_vars);
  int n_clamped = 0;
  for (int t = 0; t < t_len; ++t) {
    const int s = decoded[t];
    if (s < 0 || s >= params.n_states())
      throw Error(ErrorCategory::data,
                  "validation: decoded state out of range");
    for (int r = 0; r < r_vars; ++r) {
      const double y = series.at(t, r);
      double &out = residuals[static_cast<std::size_t>(t) * r_vars + r];
      if (is_missing(y)) {
        out = missing_value();
        continue;
      }
      const Density &d = params.emissions->variables[r].by_state[s];
      double u;
      if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d);
          z && y == 0.0) {
        // point mass: randomized residual over the mass interval
        u = z->zero_mass > 0.0 ? rng.uniform_open(0.0, z->zero_mass)
                               : 0.0;
      } else {
        u = cdf(d, y);
      }
      if (u < kCdfFloor || u > 1.0 - kCdfFloor) {
        u = std::clamp(u, kCdfFloor, 1.0 - kCdfFloor);
        ++n_clamped;
      }
      out = normal_quantile(u);
    }
  }
  if (n_clamped > 0) {
    std::ostringstream msg;
    msg << n_clamped << " cumulative probabilities clamped to [" << kCdfFloor
        << ", 1-" << kCdfFloor << "] in pseudo-residuals";
    warn(warnings, msg.str());
  }
  return residuals;
}

InformationCriteria information_criteria(double loglik, int n_params,
                                         long n_obs) {
  if (n_obs < 1)
    throw Error(ErrorCategory::data, "domain: information criteria need n_obs >= 1");
  InformationCriteria ic;
  ic.aic = -2.0 * loglik + 2.0 * n_params;
  ic.bic = -2.0 * loglik + n_params * std::log(static_cast<double>(n_obs));
  return ic;
}

} // namespace hhmm
