#include "hhmm/estimate.hpp"

#include "hhmm/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

namespace hhmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Policy = InitialDistribution::Policy;

void layout_require(bool ok, const std::string &what) {
  if (!ok) throw Error(ErrorCategory::data, "layout: " + what);
}

void check_compatible(const HierarchicalModel &model,
                      const HierarchicalModel &proto) {
  layout_require(model.k_internal() == proto.k_internal(),
                 "internal state count mismatch");
  layout_require(model.n_production() == proto.n_production(),
                 "production state count mismatch");
  layout_require(model.share_emissions == proto.share_emissions,
                 "emission sharing mismatch");
  layout_require(model.internal_initial.policy == proto.internal_initial.policy,
                 "internal initial policy mismatch");
  for (int c = 0; c < model.k_internal(); ++c)
    layout_require(model.production[c].initial.policy ==
                       proto.production[c].initial.policy,
                   "production initial policy mismatch");
  const int blocks = proto.share_emissions ? 1 : proto.k_internal();
  for (int b = 0; b < blocks; ++b) {
    const auto &em = model.emissions(b);
    const auto &ref = proto.emissions(b);
    layout_require(em.n_vars() == ref.n_vars(), "variable count mismatch");
    for (int r = 0; r < ref.n_vars(); ++r)
      for (int i = 0; i < ref.n_states(); ++i)
        layout_require(family_of(em.variables[r].by_state[i]) ==
                           family_of(ref.variables[r].by_state[i]),
                       "emission family mismatch");
  }
}

} // namespace

ModelLayout::ModelLayout(HierarchicalModel prototype)
    : prototype_(std::move(prototype)) {
  prototype_.validate();
  const int k = prototype_.k_internal();
  const int n = prototype_.n_production();
  int count = k * (k - 1);
  if (prototype_.internal_initial.policy == Policy::Estimated) count += k - 1;
  count += k * n * (n - 1);
  for (const auto &chain : prototype_.production)
    if (chain.initial.policy == Policy::Estimated) count += n - 1;
  const int blocks = prototype_.share_emissions ? 1 : k;
  for (int b = 0; b < blocks; ++b)
    for (const auto &var : prototype_.emissions(b).variables)
      for (const auto &d : var.by_state) count += n_working_params(family_of(d));
  n_params_ = count;
}

std::vector<double> ModelLayout::pack(const HierarchicalModel &model,
                                      Warnings *warnings) const {
  model.validate();
  check_compatible(model, prototype_);
  std::vector<double> theta;
  theta.reserve(n_params_);
  auto push_betas = [&](const TransitionMatrix &g) {
    const auto w = natural_to_working(g, kTpmFloor, warnings);
    theta.insert(theta.end(), w.betas.begin(), w.betas.end());
  };
  push_betas(model.internal_tpm);
  if (model.internal_initial.policy == Policy::Estimated)
    theta.insert(theta.end(), model.internal_initial.params.begin(),
                 model.internal_initial.params.end());
  for (const auto &chain : model.production) push_betas(chain.tpm);
  for (const auto &chain : model.production)
    if (chain.initial.policy == Policy::Estimated)
      theta.insert(theta.end(), chain.initial.params.begin(),
                   chain.initial.params.end());
  const int blocks = model.share_emissions ? 1 : model.k_internal();
  for (int b = 0; b < blocks; ++b) {
    const auto &em = model.emissions(b);
    for (int i = 0; i < em.n_states(); ++i)
      for (const auto &var : em.variables) {
        const int p = n_working_params(family_of(var.by_state[i]));
        const auto offset = theta.size();
        theta.resize(offset + p);
        density_to_working(var.by_state[i],
                           std::span<double>(theta).subspan(offset, p));
      }
  }
  layout_require(static_cast<int>(theta.size()) == n_params_,
                 "packed length disagrees with layout");
  return theta;
}

HierarchicalModel ModelLayout::unpack(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != n_params_)
    throw Error(ErrorCategory::data,
                "layout: working vector length mismatch: expected " +
                    std::to_string(n_params_) + ", got " +
                    std::to_string(theta.size()));
  std::size_t pos = 0;
  auto take = [&](int count) {
    auto s = theta.subspan(pos, count);
    pos += count;
    return s;
  };

  HierarchicalModel out = prototype_;
  const int k = out.k_internal();
  const int n = out.n_production();
  {
    const auto s = take(k * (k - 1));
    out.internal_tpm = working_to_natural({k, {s.begin(), s.end()}});
  }
  if (out.internal_initial.policy == Policy::Estimated) {
    const auto s = take(k - 1);
    out.internal_initial.params.assign(s.begin(), s.end());
  }
  for (auto &chain : out.production) {
    const auto s = take(n * (n - 1));
    chain.tpm = working_to_natural({n, {s.begin(), s.end()}});
  }
  for (auto &chain : out.production)
    if (chain.initial.policy == Policy::Estimated) {
      const auto s = take(n - 1);
      chain.initial.params.assign(s.begin(), s.end());
    }

  const int blocks = out.share_emissions ? 1 : k;
  std::vector<std::shared_ptr<const EmissionModel>> models;
  models.reserve(blocks);
  for (int b = 0; b < blocks; ++b) {
    const auto &ref = prototype_.emissions(b);
    EmissionModel em;
    em.variables.resize(ref.n_vars());
    for (int r = 0; r < ref.n_vars(); ++r) {
      em.variables[r].name = ref.variables[r].name;
      em.variables[r].by_state.resize(n, NormalParams{});
    }
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < ref.n_vars(); ++r) {
        const Family f = family_of(ref.variables[r].by_state[i]);
        em.variables[r].by_state[i] =
            density_from_working(f, take(n_working_params(f)));
      }
    models.push_back(std::make_shared<EmissionModel>(std::move(em)));
  }
  for (int c = 0; c < k; ++c)
    out.production[c].emissions = models[out.share_emissions ? 0 : c];
  return out;
}

OptimizerKind optimizer_from_name(const std::string &name) {
  if (name == "nelder-mead") return OptimizerKind::NelderMead;
  if (name == "bfgs") return OptimizerKind::Bfgs;
  throw Error(ErrorCategory::usage, "invalid-parameter: unknown optimizer '" +
                                        name +
                                        "' (expected nelder-mead or bfgs)");
}

const char *optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::Bfgs ? "bfgs" : "nelder-mead";
}

namespace {

// Chunk moments of the sorted pooled values: an N-way quantile split gives
// per-state (mean, sd) pairs ordered by mean.
struct ChunkMoments {
  double mean = 0.0;
  double sd = 1.0;
};

std::vector<ChunkMoments> quantile_moments(std::vector<double> values, int n) {
  std::vector<ChunkMoments> out(n);
  std::sort(values.begin(), values.end());
  const auto sz = values.size();
  for (int i = 0; i < n; ++i) {
    const auto begin = sz * i / n;
    const auto end = sz * (i + 1) / n;
    if (begin >= end) {
      out[i] = {static_cast<double>(i), 1.0};
      continue;
    }
    const std::span<const double> chunk(values.data() + begin, end - begin);
    double mean = sample_mean(chunk);
    double sd = sample_sd(chunk);
    if (!std::isfinite(mean)) mean = static_cast<double>(i);
    if (!std::isfinite(sd) || sd <= 0.0)
      sd = std::max(1e-3 * (std::abs(mean) + 1e-3), 1e-6);
    out[i] = {mean, sd};
  }
  return out;
}

std::vector<Density> split_states(Family family, std::vector<double> values,
                                  int n) {
  std::vector<Density> out;
  out.reserve(n);
  switch (family) {
  case Family::Normal: {
    for (const auto &m : quantile_moments(std::move(values), n))
      out.push_back(NormalParams{m.mean, m.sd});
    break;
  }
  case Family::Gamma: {
    for (const auto &m : quantile_moments(std::move(values), n))
      out.push_back(from_mean_sd(std::max(m.mean, 1e-6), m.sd));
    break;
  }
  case Family::ZeroInflatedGamma: {
    std::vector<double> positive;
    std::size_t zeros = 0;
    for (double y : values) {
      if (y == 0.0)
        ++zeros;
      else if (y > 0.0)
        positive.push_back(y);
    }
    const double total = std::max<std::size_t>(values.size(), 1);
    const double zero_mass =
        std::clamp(static_cast<double>(zeros) / total, 1e-3, 1.0 - 1e-3);
    for (const auto &m : quantile_moments(std::move(positive), n))
      out.push_back(ZeroInflatedGammaParams{
          zero_mass, from_mean_sd(std::max(m.mean, 1e-6), m.sd)});
    break;
  }
  }
  return out;
}

TransitionMatrix diagonal_dominant(int size, double beta) {
  return working_to_natural(
      {size, std::vector<double>(static_cast<std::size_t>(size) * (size - 1),
                                 beta)});
}

} // namespace

HierarchicalModel initial_model(const HierarchicalModel &prototype,
                                const SegmentedSeries &data) {
  prototype.validate();
  data.validate();
  const int k = prototype.k_internal();
  const int n = prototype.n_production();
  const int n_vars = prototype.emissions(0).n_vars();
  if (data.n_vars() != n_vars)
    throw Error(ErrorCategory::data,
                "validation: model declares " + std::to_string(n_vars) +
                    " variables but data has " + std::to_string(data.n_vars()));

  HierarchicalModel start = prototype;
  start.internal_tpm = diagonal_dominant(k, -2.0);
  if (start.internal_initial.policy == Policy::Estimated)
    start.internal_initial.params.assign(k - 1, 0.0);
  for (int c = 0; c < k; ++c) {
    // the per-chain tilt keeps identical chains off the symmetry saddle
    start.production[c].tpm = diagonal_dominant(n, -2.0 + 0.3 * c);
    if (start.production[c].initial.policy == Policy::Estimated)
      start.production[c].initial.params.assign(n - 1, 0.0);
  }

  std::vector<std::vector<double>> pooled(n_vars);
  for (const auto &segment : data.segments)
    for (int t = 0; t < segment.length(); ++t)
      for (int r = 0; r < n_vars; ++r) {
        const double y = segment.at(t, r);
        if (!is_missing(y)) pooled[r].push_back(y);
      }

  EmissionModel em;
  em.variables.resize(n_vars);
  const auto &proto_em = prototype.emissions(0);
  for (int r = 0; r < n_vars; ++r) {
    em.variables[r].name = proto_em.variables[r].name;
    em.variables[r].by_state = split_states(
        family_of(proto_em.variables[r].by_state[0]), pooled[r], n);
  }

  if (start.share_emissions) {
    auto shared = std::make_shared<const EmissionModel>(std::move(em));
    for (auto &chain : start.production) chain.emissions = shared;
  } else {
    for (auto &chain : start.production)
      chain.emissions = std::make_shared<const EmissionModel>(em);
  }
  return start;
}

namespace {

// Fresh start for restart r: t.p.m. betas redrawn from Normal(-2, 1),
// initial logits from Normal(0, 0.5), emission parameters jittered around
// the data-driven moments. Draw order is fixed, so results depend only on
// (seed, r), not on scheduling.
HierarchicalModel perturbed_model(const HierarchicalModel &base,
                                  std::uint64_t seed, int r) {
  Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(r));
  HierarchicalModel m = base;
  const int k = m.k_internal();
  const int n = m.n_production();

  auto draw_tpm = [&](int size) {
    WorkingTpm w{size, std::vector<double>(
                           static_cast<std::size_t>(size) * (size - 1))};
    for (auto &b : w.betas) b = -2.0 + rng.normal();
    return working_to_natural(w);
  };
  m.internal_tpm = draw_tpm(k);
  if (m.internal_initial.policy == Policy::Estimated)
    for (auto &p : m.internal_initial.params) p = 0.5 * rng.normal();
  for (auto &chain : m.production) chain.tpm = draw_tpm(n);
  for (auto &chain : m.production)
    if (chain.initial.policy == Policy::Estimated)
      for (auto &p : chain.initial.params) p = 0.5 * rng.normal();

  const int blocks = m.share_emissions ? 1 : k;
  std::vector<std::shared_ptr<const EmissionModel>> fresh;
  fresh.reserve(blocks);
  for (int b = 0; b < blocks; ++b) {
    EmissionModel em = m.emissions(b);
    for (int i = 0; i < n; ++i)
      for (auto &var : em.variables) {
        Density &d = var.by_state[i];
        const Family f = family_of(d);
        double buf[3];
        std::span<double> w(buf, static_cast<std::size_t>(n_working_params(f)));
        density_to_working(d, w);
        switch (f) {
        case Family::Gamma:
          w[0] += 0.3 * rng.normal();
          w[1] += 0.3 * rng.normal();
          break;
        case Family::ZeroInflatedGamma:
          w[0] += 0.3 * rng.normal();
          w[1] += 0.3 * rng.normal();
          w[2] += 0.5 * rng.normal();
          break;
        case Family::Normal:
          w[0] += 0.3 * std::exp(w[1]) * rng.normal();
          w[1] += 0.3 * rng.normal();
          break;
        }
        d = density_from_working(f, w);
      }
    fresh.push_back(std::make_shared<const EmissionModel>(std::move(em)));
  }
  for (int c = 0; c < k; ++c)
    m.production[c].emissions = fresh[m.share_emissions ? 0 : c];
  return m;
}

int resolve_threads(int requested, int restarts) {
  int n = requested;
  if (n <= 0) {
    if (const char *env = std::getenv("HHMM_THREADS")) n = std::atoi(env);
    if (n <= 0) n = 1;
  }
  return std::clamp(n, 1, restarts);
}

struct RestartOutcome {
  bool finite = false;
  OptimResult result;
  std::string note;
};

} // namespace

FitResult fit(const SegmentedSeries &data, const HierarchicalModel &prototype,
              const FitOptions &options) {
  if (options.restarts < 1)
    throw Error(ErrorCategory::usage,
                "invalid-parameter: restarts must be >= 1");
  data.validate();

  const HierarchicalModel start_model = initial_model(prototype, data);
  const ModelLayout layout(start_model);
  Warnings warnings;

  std::vector<double> start0;
  if (!options.start.empty()) {
    if (static_cast<int>(options.start.size()) != layout.n_params())
      throw Error(ErrorCategory::data,
                  "layout: starting vector length mismatch: expected " +
                      std::to_string(layout.n_params()) + ", got " +
                      std::to_string(options.start.size()));
    start0 = options.start;
  } else {
    start0 = layout.pack(start_model, &warnings);
  }

  const Objective objective = [&](std::span<const double> theta) -> double {
    try {
      return -hierarchical_log_likelihood(layout.unpack(theta), data);
    } catch (const Error &) {
      return kInf;
    }
  };

  std::vector<RestartOutcome> outcomes(options.restarts);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= options.restarts) return;
      auto &slot = outcomes[r];
      try {
        std::vector<double> x0 =
            (r == 0) ? start0
                     : layout.pack(perturbed_model(start_model, options.seed, r));
        if (!std::isfinite(objective(x0))) {
          slot.note = "restart " + std::to_string(r) +
                      ": non-finite objective at start point; discarded";
          continue;
        }
        slot.result = (options.optimizer == OptimizerKind::Bfgs)
                          ? bfgs(objective, std::move(x0), options.optim)
                          : nelder_mead(objective, std::move(x0), options.optim);
        slot.finite = std::isfinite(slot.result.value);
        if (!slot.finite)
          slot.note = "restart " + std::to_string(r) +
                      ": optimizer ended at a non-finite objective";
      } catch (const std::exception &e) {
        slot.note = "restart " + std::to_string(r) + ": " + e.what();
      }
    }
  };

  const int n_threads = resolve_threads(options.threads, options.restarts);
  std::vector<std::thread> pool;
  pool.reserve(n_threads - 1);
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();

  int best = -1;
  int n_finite = 0;
  for (int r = 0; r < options.restarts; ++r) {
    if (!outcomes[r].finite) continue;
    ++n_finite;
    if (best < 0 || outcomes[r].result.value < outcomes[best].result.value)
      best = r;
  }
  for (const auto &o : outcomes)
    if (!o.note.empty()) warnings.push_back("fit: " + o.note);

  if (best < 0) {
    std::ostringstream msg;
    msg << "fit-failure: all restarts failed:";
    for (int r = 0; r < options.restarts; ++r)
      msg << " [" << (outcomes[r].note.empty()
                          ? "restart " + std::to_string(r) + ": no finite optimum"
                          : outcomes[r].note)
          << "]";
    throw Error(ErrorCategory::numeric, msg.str());
  }

  FitResult out;
  out.model = layout.unpack(outcomes[best].result.x);
  out.loglik = -outcomes[best].result.value;
  out.n_params = layout.n_params();
  const auto ic =
      information_criteria(out.loglik, out.n_params, data.total_observations());
  out.aic = ic.aic;
  out.bic = ic.bic;
  out.converged = outcomes[best].result.converged;
  out.n_restarts_used = n_finite;
  out.best_restart_seed = static_cast<std::uint64_t>(best);
  if (!out.converged)
    warnings.push_back(
        "fit: best restart stopped at max_iter before meeting tolerance");
  out.warnings = std::move(warnings);
  return out;
}

namespace {

std::vector<std::vector<int>> all_permutations(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<int>> out;
  do out.push_back(idx);
  while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

double tpm_cost(const TransitionMatrix &fitted, std::span<const int> perm,
                const TransitionMatrix &ref) {
  double cost = 0.0;
  for (int i = 0; i < ref.size(); ++i)
    for (int j = 0; j < ref.size(); ++j)
      cost += std::abs(fitted(perm[i], perm[j]) - ref(i, j));
  return cost;
}

double emission_cost(const EmissionModel &fitted, std::span<const int> perm,
                     const EmissionModel &ref) {
  double cost = 0.0;
  for (int r = 0; r < ref.n_vars(); ++r)
    for (int i = 0; i < ref.n_states(); ++i)
      cost += std::abs(mean_of(fitted.variables[r].by_state[perm[i]]) -
                       mean_of(ref.variables[r].by_state[i]));
  return cost;
}

void check_permutation(std::span<const int> perm, int n, const char *which) {
  if (static_cast<int>(perm.size()) != n)
    throw Error(ErrorCategory::data,
                std::string("invalid-parameter: ") + which +
                    " permutation has the wrong length");
  std::vector<bool> seen(n, false);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[p])
      throw Error(ErrorCategory::data, std::string("invalid-parameter: ") +
                                           which + " is not a permutation");
    seen[p] = true;
  }
}

} // namespace

LabelAlignment align_labels(const HierarchicalModel &fitted,
                            const HierarchicalModel &reference) {
  fitted.validate();
  reference.validate();
  if (fitted.k_internal() != reference.k_internal() ||
      fitted.n_production() != reference.n_production())
    throw Error(ErrorCategory::data,
                "invalid-parameter: label alignment needs matching (K, N)");
  const int k = fitted.k_internal();

  LabelAlignment best;
  double best_cost = kInf;
  for (const auto &tau : all_permutations(k))
    for (const auto &sigma : all_permutations(fitted.n_production())) {
      double cost = tpm_cost(fitted.internal_tpm, tau, reference.internal_tpm);
      for (int c = 0; c < k; ++c) {
        cost += tpm_cost(fitted.production[tau[c]].tpm, sigma,
                         reference.production[c].tpm);
        cost += emission_cost(fitted.emissions(tau[c]), sigma,
                              reference.emissions(c));
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = {tau, sigma};
      }
    }
  return best;
}

HierarchicalModel apply_alignment(const HierarchicalModel &fitted,
                                  const LabelAlignment &alignment) {
  fitted.validate();
  const int k = fitted.k_internal();
  const int n = fitted.n_production();
  check_permutation(alignment.internal, k, "internal");
  check_permutation(alignment.production, n, "production");

  auto permute_tpm = [](const TransitionMatrix &g, std::span<const int> p) {
    std::vector<std::vector<double>> rows(p.size(),
                                          std::vector<double>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < p.size(); ++j) rows[i][j] = g(p[i], p[j]);
    return TransitionMatrix::from_rows(rows);
  };
  auto permute_initial = [](const InitialDistribution &init,
                            const TransitionMatrix &g,
                            std::span<const int> p) {
    switch (init.policy) {
    case Policy::Stationary:
      return init; // stationary of the permuted t.p.m. is the permuted vector
    case Policy::Fixed: {
      std::vector<double> probs(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) probs[i] = init.params[p[i]];
      return InitialDistribution::fixed(std::move(probs));
    }
    case Policy::Estimated: {
      const auto q = realize_initial(init, g);
      std::vector<double> logits(p.size() - 1);
      for (std::size_t i = 1; i < p.size(); ++i)
        logits[i - 1] = std::log(q[p[i]] / q[p[0]]);
      return InitialDistribution::estimated(std::move(logits));
    }
    }
    return init;
  };
  auto permute_emissions = [&](const EmissionModel &em) {
    EmissionModel out = em;
    for (int r = 0; r < em.n_vars(); ++r)
      for (int i = 0; i < n; ++i)
        out.variables[r].by_state[i] =
            em.variables[r].by_state[alignment.production[i]];
    return out;
  };

  HierarchicalModel out = fitted;
  out.internal_tpm = permute_tpm(fitted.internal_tpm, alignment.internal);
  out.internal_initial = permute_initial(
      fitted.internal_initial, fitted.internal_tpm, alignment.internal);

  std::shared_ptr<const EmissionModel> shared;
  if (fitted.share_emissions)
    shared = std::make_shared<const EmissionModel>(
        permute_emissions(fitted.emissions(0)));
  std::vector<HmmParams> chains(k);
  for (int c = 0; c < k; ++c) {
    const auto &src = fitted.production[alignment.internal[c]];
    chains[c].tpm = permute_tpm(src.tpm, alignment.production);
    chains[c].initial =
        permute_initial(src.initial, src.tpm, alignment.production);
    chains[c].emissions =
        fitted.share_emissions
            ? shared
            : std::make_shared<const EmissionModel>(permute_emissions(*src.emissions));
  }
  out.production = std::move(chains);
  return out;
}

} // namespace hhmm
