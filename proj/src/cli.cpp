#include "hhmm/cli.hpp"

#include "hhmm/estimate.hpp"
#include "hhmm/ingest.hpp"
#include "hhmm/model_io.hpp"
#include "hhmm/stats.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

namespace hhmm {

namespace {

using Policy = InitialDistribution::Policy;

// shortest round-trip representation, used for all data files
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_or_empty(double v) { return std::isnan(v) ? "" : fmt(v); }

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string join_fixed(std::span<const double> values, int digits) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += fixed(values[i], digits);
  }
  return out;
}

void print_warnings(const Warnings &warnings) {
  for (const auto &w : warnings) std::cerr << "warning: " << w << "\n";
}

void print_matrix(std::ostream &os, const TransitionMatrix &g,
                  const std::string &indent) {
  for (int i = 0; i < g.size(); ++i)
    os << indent << join_fixed(g.row(i), 3) << "\n";
}

bool all_stationary(const HierarchicalModel &model) {
  if (model.internal_initial.policy != Policy::Stationary) return false;
  for (const auto &chain : model.production)
    if (chain.initial.policy != Policy::Stationary) return false;
  return true;
}

void print_initial_line(std::ostream &os, const InitialDistribution &init,
                        const TransitionMatrix &tpm, const std::string &indent) {
  const auto delta = realize_initial(init, tpm);
  switch (init.policy) {
  case Policy::Stationary:
    os << indent << "stationary distribution: " << join_fixed(delta, 4) << "\n";
    break;
  case Policy::Estimated:
    os << indent << "initial distribution (estimated): " << join_fixed(delta, 4)
       << "\n";
    break;
  case Policy::Fixed:
    os << indent << "initial distribution (fixed): " << join_fixed(delta, 4)
       << "\n";
    break;
  }
}

std::string describe_density(const Density &d) {
  std::ostringstream os;
  if (const auto *g = std::get_if<GammaParams>(&d)) {
    os << "gamma(shape " << fixed(g->shape, 4) << ", rate " << fixed(g->rate, 4)
       << ")";
  } else if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d)) {
    os << "zero-inflated gamma(zero mass " << fixed(z->zero_mass, 4)
       << ", shape " << fixed(z->gamma.shape, 4) << ", rate "
       << fixed(z->gamma.rate, 4) << ")";
  } else {
    const auto &n = std::get<NormalParams>(d);
    os << "normal(mean " << fixed(n.mean, 4) << ", sd " << fixed(n.sd, 4) << ")";
  }
  os << ", mean " << fixed(mean_of(d), 4) << ", sd " << fixed(sd_of(d), 4);
  return os.str();
}

void print_data_summary(const SegmentedSeries &data) {
  int shortest = data.segments[0].length();
  int longest = shortest;
  for (const auto &s : data.segments) {
    shortest = std::min(shortest, s.length());
    longest = std::max(longest, s.length());
  }
  std::cout << "segments: " << data.m_segments() << " ("
            << data.total_observations() << " observations, lengths "
            << shortest << ".." << longest << ", "
            << data.group_ranges().size() << " animal(s))\n";
}

// ---------------------------------------------------------------- fit --

struct FitArgs {
  std::string data;
  std::string config;
  std::string out;
  int restarts = 10;
  std::uint64_t seed = 1;
  double tol = 1e-8;
  int max_iter = 5000;
  std::string optimizer = "nelder-mead";
  int threads = 0;
};

int run_fit(const FitArgs &args) {
  const auto config = load_config(args.config);
  const auto data = ingest(args.data, config);
  print_data_summary(data);

  FitOptions options;
  options.restarts = args.restarts;
  options.seed = args.seed;
  options.optimizer = optimizer_from_name(args.optimizer);
  options.optim.tol = args.tol;
  options.optim.max_iter = args.max_iter;
  options.threads = args.threads;

  const auto result = fit(data, prototype_from_config(config), options);
  print_warnings(result.warnings);

  StoredModel stored;
  stored.model = result.model;
  stored.spec = config;
  stored.fit = {true,
                result.loglik,
                result.aic,
                result.bic,
                result.n_params,
                result.converged,
                result.n_restarts_used,
                result.best_restart_seed};
  save_model(stored, args.out);

  std::cout << "log-likelihood: " << fixed(result.loglik, 6) << "\n"
            << "parameters: " << result.n_params << "\n"
            << "AIC: " << fixed(result.aic, 6) << "\n"
            << "BIC: " << fixed(result.bic, 6) << "\n"
            << "converged: " << (result.converged ? "yes" : "no")
            << " (restarts used " << result.n_restarts_used
            << ", best restart " << result.best_restart_seed << ")\n";
  if (all_stationary(result.model)) {
    std::cout << "stationary distributions:\n  internal: "
              << join_fixed(stationary_distribution(result.model.internal_tpm), 4)
              << "\n";
    for (int c = 0; c < result.model.k_internal(); ++c)
      std::cout << "  production chain " << c + 1 << ": "
                << join_fixed(
                       stationary_distribution(result.model.production[c].tpm), 4)
                << "\n";
  }
  std::cout << "model written to " << args.out << "\n";
  return 0;
}

// ------------------------------------------------------------- decode --

struct DecodeArgs {
  std::string data;
  std::string model;
  std::string out;
};

int run_decode(const DecodeArgs &args) {
  const auto stored = load_model(args.model);
  const auto data = ingest(args.data, stored.spec);
  const auto decoded = decode(stored.model, data);

  std::string csv = "segment,internal_state,t,production_state\n";
  for (int m = 0; m < data.m_segments(); ++m)
    for (std::size_t t = 0; t < decoded.production[m].size(); ++t) {
      csv += std::to_string(m + 1);
      csv += ',';
      csv += std::to_string(decoded.internal[m] + 1);
      csv += ',';
      csv += std::to_string(t + 1);
      csv += ',';
      csv += std::to_string(decoded.production[m][t] + 1);
      csv += '\n';
    }
  write_text_atomic(args.out, csv);
  std::cout << "decoded " << data.m_segments() << " segments ("
            << data.total_observations() << " observations) to " << args.out
            << "\n";
  return 0;
}

// ----------------------------------------------------------- simulate --

struct SimulateArgs {
  std::string model;
  std::string out;
  int segments = 0;
  std::string lengths;
  std::uint64_t seed = 1;
};

std::vector<int> resolve_lengths(const SimulateArgs &args) {
  if (args.lengths.empty())
    throw Error(ErrorCategory::usage, "invalid-parameter: --lengths is required");
  std::vector<int> lengths;
  std::size_t start = 0;
  const std::string &text = args.lengths;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    const std::string token = text.substr(start, comma - start);
    int value = 0;
    const auto [p, ec] =
        std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || p != token.data() + token.size() || value < 1)
      throw Error(ErrorCategory::usage,
                  "invalid-parameter: bad segment length '" + token + "'");
    lengths.push_back(value);
    start = comma + 1;
  }
  if (lengths.size() == 1) {
    if (args.segments < 1)
      throw Error(ErrorCategory::usage,
                  "invalid-parameter: --segments is required when --lengths "
                  "is a single value");
    return std::vector<int>(args.segments, lengths[0]);
  }
  if (args.segments > 0 &&
      args.segments != static_cast<int>(lengths.size()))
    throw Error(ErrorCategory::usage,
                "invalid-parameter: --segments disagrees with the --lengths list");
  return lengths;
}

int run_simulate(const SimulateArgs &args) {
  const auto stored = load_model(args.model);
  const auto lengths = resolve_lengths(args);
  Rng rng(args.seed);
  const auto [truth, data] = simulate_hierarchical(stored.model, lengths, rng);

  const auto &spec = stored.spec;
  const bool by_column =
      spec.segmentation.mode == SegmentationRule::Mode::ByColumn;
  const bool windowed =
      spec.segmentation.mode == SegmentationRule::Mode::ByTimeWindow;

  // Synthetic timestamps: rows sit strictly inside their time windows with
  // margin, and the very first row sits earlier within its window than any
  // other row, so ingesting the file reproduces the segments exactly.
  int longest = 1;
  for (int len : lengths) longest = std::max(longest, len);
  const double spacing =
      windowed ? spec.segmentation.window / (longest + 2) : 1.0;

  std::string csv = spec.time_column;
  if (!spec.animal_column.empty()) csv += ',' + spec.animal_column;
  if (by_column) csv += ',' + spec.segmentation.column;
  for (const auto &var : spec.variables) csv += ',' + var.name;
  csv += ",true_internal,true_production\n";

  long row_index = 0;
  for (int m = 0; m < data.m_segments(); ++m) {
    const auto &segment = data.segments[m];
    for (int t = 0; t < segment.length(); ++t) {
      ++row_index;
      if (windowed) {
        const double offset =
            (m == 0 && t == 0) ? 0.5 * spacing : (t + 1) * spacing;
        csv += fmt(m * spec.segmentation.window + offset);
      } else {
        csv += std::to_string(row_index);
      }
      if (!spec.animal_column.empty()) csv += ",1";
      if (by_column) {
        csv += ',';
        csv += std::to_string(m + 1);
      }
      for (int r = 0; r < segment.n_vars; ++r) {
        csv += ',';
        csv += fmt(invert_transform(spec.variables[r].transform,
                                    segment.at(t, r)));
      }
      csv += ',';
      csv += std::to_string(truth.internal[m] + 1);
      csv += ',';
      csv += std::to_string(truth.production[m][t] + 1);
      csv += '\n';
    }
  }
  write_text_atomic(args.out, csv);
  std::cout << "simulated " << data.m_segments() << " segments ("
            << data.total_observations() << " observations) to " << args.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------- residuals --

struct ResidualsArgs {
  std::string data;
  std::string model;
  std::string out;
  std::uint64_t seed = 0;
};

int run_residuals(const ResidualsArgs &args) {
  const auto stored = load_model(args.model);
  const auto data = ingest(args.data, stored.spec);
  const auto decoded = decode(stored.model, data);
  Rng rng(args.seed);
  Warnings warnings;
  const auto residuals =
      hierarchical_pseudo_residuals(stored.model, data, decoded, rng, &warnings);
  print_warnings(warnings);

  const int n_vars = data.n_vars();
  std::string csv = "segment,t";
  for (const auto &name : data.variable_names) csv += ',' + name + "_residual";
  csv += '\n';
  std::vector<std::vector<double>> pooled(n_vars);
  for (int m = 0; m < data.m_segments(); ++m) {
    const int t_len = data.segments[m].length();
    for (int t = 0; t < t_len; ++t) {
      csv += std::to_string(m + 1);
      csv += ',';
      csv += std::to_string(t + 1);
      for (int r = 0; r < n_vars; ++r) {
        const double value = residuals[m][t * n_vars + r];
        csv += ',';
        csv += fmt_or_empty(value);
        pooled[r].push_back(value);
      }
      csv += '\n';
    }
  }
  write_text_atomic(args.out, csv);

  for (int r = 0; r < n_vars; ++r) {
    const auto ks = ks_test_normal(pooled[r]);
    std::cout << "residuals for '" << data.variable_names[r]
              << "': mean " << fixed(sample_mean(pooled[r]), 4) << ", sd "
              << fixed(sample_sd(pooled[r]), 4) << ", KS statistic "
              << fixed(ks.statistic, 4) << " (p = " << fixed(ks.p_value, 4)
              << ", n = " << ks.n << ")\n";
  }
  std::cout << "residuals written to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------- summarize --

struct SummarizeArgs {
  std::string model;
  std::string out_prefix;
};

void write_density_curves(const StoredModel &stored, const std::string &prefix) {
  const auto &model = stored.model;
  const int n = model.n_production();
  const int blocks = model.share_emissions ? 1 : model.k_internal();
  for (int b = 0; b < blocks; ++b) {
    const auto &em = model.emissions(b);
    for (int r = 0; r < em.n_vars(); ++r) {
      const auto &var = em.variables[r];
      double lo = 0.0, hi = 1.0;
      bool positive = true;
      for (const auto &d : var.by_state) {
        if (family_of(d) == Family::Normal) positive = false;
        lo = std::min(lo, mean_of(d) - 4.0 * sd_of(d));
        hi = std::max(hi, mean_of(d) + 4.0 * sd_of(d));
      }
      if (positive) lo = hi / 400.0; // gamma curves start just above zero
      std::string csv = "y";
      for (int i = 0; i < n; ++i) csv += ",state_" + std::to_string(i + 1);
      csv += '\n';
      const int points = 201;
      for (int p = 0; p < points; ++p) {
        const double y = lo + (hi - lo) * p / (points - 1);
        csv += fmt(y);
        for (int i = 0; i < n; ++i) {
          csv += ',';
          csv += fmt(std::exp(log_pdf(var.by_state[i], y)));
        }
        csv += '\n';
      }
      std::string path = prefix;
      if (blocks > 1) path += "_chain" + std::to_string(b + 1);
      path += "_" + var.name + ".csv";
      write_text_atomic(path, csv);
      std::cout << "density curves written to " << path << "\n";
    }
  }
}

int run_summarize(const SummarizeArgs &args) {
  const auto stored = load_model(args.model);
  const auto &model = stored.model;
  const int k = model.k_internal();

  std::cout << "model: K=" << k << " internal states, N=" << model.n_production()
            << " production states, emissions "
            << (model.share_emissions ? "shared" : "per chain") << "\n";
  std::cout << "variables:";
  for (const auto &var : stored.spec.variables) {
    std::cout << " " << var.name << " (" << family_name(var.family);
    if (var.transform != Transform::None)
      std::cout << ", " << transform_name(var.transform) << " scale";
    std::cout << ")";
  }
  std::cout << "\n";
  if (stored.fit.present)
    std::cout << "fitted: log-likelihood " << fixed(stored.fit.loglik, 6)
              << ", AIC " << fixed(stored.fit.aic, 6) << ", BIC "
              << fixed(stored.fit.bic, 6) << " (" << stored.fit.n_params
              << " parameters, "
              << (stored.fit.converged ? "converged" : "not converged") << ")\n";

  std::cout << "internal transition probabilities:\n";
  print_matrix(std::cout, model.internal_tpm, "  ");
  print_initial_line(std::cout, model.internal_initial, model.internal_tpm, "  ");

  for (int c = 0; c < k; ++c) {
    const auto &chain = model.production[c];
    std::cout << "production chain " << c + 1
              << " transition probabilities:\n";
    print_matrix(std::cout, chain.tpm, "  ");
    print_initial_line(std::cout, chain.initial, chain.tpm, "  ");
  }

  const int blocks = model.share_emissions ? 1 : k;
  for (int b = 0; b < blocks; ++b) {
    std::cout << (model.share_emissions
                      ? std::string("emission distributions:\n")
                      : "emission distributions (chain " + std::to_string(b + 1) +
                            "):\n");
    const auto &em = model.emissions(b);
    for (int i = 0; i < em.n_states(); ++i) {
      std::cout << "  state " << i + 1 << ":\n";
      for (const auto &var : em.variables)
        std::cout << "    " << var.name << ": "
                  << describe_density(var.by_state[i]) << "\n";
    }
  }

  if (!args.out_prefix.empty()) write_density_curves(stored, args.out_prefix);
  return 0;
}

const char *category_name(ErrorCategory cat) {
  switch (cat) {
  case ErrorCategory::usage: return "usage";
  case ErrorCategory::data: return "data";
  case ErrorCategory::numeric: return "numeric";
  }
  return "?";
}

} // namespace

int run_cli(int argc, const char *const *argv) {
  CLI::App app{"hierarchical hidden Markov models for multi-scale time series"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto *fit_cmd = app.add_subcommand(
      "fit", "fit a model to a data file by maximum likelihood");
  fit_cmd->add_option("data", fit_args.data, "input CSV")->required();
  fit_cmd->add_option("--config", fit_args.config, "model spec JSON")->required();
  fit_cmd->add_option("--out", fit_args.out, "output model file")->required();
  fit_cmd->add_option("--restarts", fit_args.restarts, "optimizer restarts");
  fit_cmd->add_option("--seed", fit_args.seed, "restart randomization seed");
  fit_cmd->add_option("--tol", fit_args.tol, "objective-change tolerance");
  fit_cmd->add_option("--max-iter", fit_args.max_iter, "iteration cap");
  fit_cmd->add_option("--optimizer", fit_args.optimizer,
                      "nelder-mead or bfgs");
  fit_cmd->add_option("--threads", fit_args.threads,
                      "parallel restarts (default HHMM_THREADS or 1)");

  DecodeArgs decode_args;
  auto *decode_cmd =
      app.add_subcommand("decode", "two-stage global state decoding");
  decode_cmd->add_option("data", decode_args.data, "input CSV")->required();
  decode_cmd->add_option("--model", decode_args.model, "model file")->required();
  decode_cmd->add_option("--out", decode_args.out, "output CSV")->required();

  SimulateArgs simulate_args;
  auto *simulate_cmd =
      app.add_subcommand("simulate", "draw synthetic data from a model");
  simulate_cmd->add_option("--model", simulate_args.model, "model file")
      ->required();
  simulate_cmd->add_option("--segments", simulate_args.segments,
                           "number of segments");
  simulate_cmd->add_option("--lengths", simulate_args.lengths,
                           "segment length, or comma-separated list")
      ->required();
  simulate_cmd->add_option("--seed", simulate_args.seed, "stream seed");
  simulate_cmd->add_option("--out", simulate_args.out, "output CSV")->required();

  ResidualsArgs residuals_args;
  auto *residuals_cmd = app.add_subcommand(
      "residuals", "pseudo-residuals under a fitted model");
  residuals_cmd->add_option("data", residuals_args.data, "input CSV")
      ->required();
  residuals_cmd->add_option("--model", residuals_args.model, "model file")
      ->required();
  residuals_cmd->add_option("--out", residuals_args.out, "output CSV")
      ->required();
  residuals_cmd->add_option("--seed", residuals_args.seed,
                            "stream seed for randomized residuals");

  SummarizeArgs summarize_args;
  auto *summarize_cmd =
      app.add_subcommand("summarize", "pretty-print a model file");
  summarize_cmd->add_option("--model", summarize_args.model, "model file")
      ->required();
  summarize_cmd->add_option("--out-prefix", summarize_args.out_prefix,
                            "also write density-curve CSVs with this prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error (usage): " << e.what() << "\n";
    return 2;
  }

  const auto started = std::chrono::steady_clock::now();
  int code = 0;
  try {
    if (fit_cmd->parsed()) code = run_fit(fit_args);
    else if (decode_cmd->parsed()) code = run_decode(decode_args);
    else if (simulate_cmd->parsed()) code = run_simulate(simulate_args);
    else if (residuals_cmd->parsed()) code = run_residuals(residuals_args);
    else if (summarize_cmd->parsed()) code = run_summarize(summarize_args);
  } catch (const Error &e) {
    std::cerr << "error (" << category_name(e.category()) << "): " << e.what()
              << "\n";
    return e.exit_code();
  } catch (const std::exception &e) {
    std::cerr << "error (internal): " << e.what() << "\n";
    return 1;
  }
  const std::chrono::duration<double> elapsed =
      std::chrono::steady_clock::now() - started;
  std::cerr << "runtime: " << fixed(elapsed.count(), 2) << " s\n";
  return code;
}

} // namespace hhmm
