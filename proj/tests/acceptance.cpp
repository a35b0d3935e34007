// End-to-end acceptance gate: one pass/fail line per criterion, nonzero
// exit when any criterion fails. Statistical checks run on fixed seeds.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "hhmm/estimate.hpp"
#include "hhmm/model_io.hpp"
#include "hhmm/stats.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace hhmm;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Harness {
  int failures = 0;

  void run(int id, const std::string &name, double limit_seconds,
           const std::function<Outcome()> &body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = body();
    } catch (const std::exception &e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (outcome.ok && limit_seconds > 0.0 && seconds > limit_seconds) {
      outcome.ok = false;
      outcome.detail += " [over the " + std::to_string(limit_seconds) +
                        " s budget]";
    }
    std::ostringstream line;
    line << "criterion " << std::setw(2) << id << " ["
         << (outcome.ok ? "pass" : "FAIL") << "] " << name;
    if (!outcome.detail.empty()) line << ": " << outcome.detail;
    line << " (" << std::fixed << std::setprecision(1) << seconds << " s)";
    std::cout << line.str() << std::endl;
    if (!outcome.ok) ++failures;
  }
};

std::string fmt3(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

double tpm_gap(const TransitionMatrix &a, const TransitionMatrix &b) {
  double worst = 0.0;
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < a.size(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
  return worst;
}

bool close_rel(double got, double want, double tol) {
  return std::abs(got - want) <= tol * std::max(1.0, std::abs(want));
}

// ---------------------------------------------------------------------
// deployment-scale recovery setup shared by the fit-based criteria

constexpr int kSegments = 275;
constexpr int kSegmentLength = 28;
constexpr int kReplicates = 10;

HierarchicalModel recovery_prototype() {
  HierarchicalModel prototype;
  prototype.internal_tpm = TransitionMatrix::uniform(2);
  prototype.internal_initial = InitialDistribution::stationary();
  auto em = fixtures::gamma_emissions({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0});
  for (int k = 0; k < 2; ++k)
    prototype.production.push_back(fixtures::make_hmm(
        TransitionMatrix::uniform(3), InitialDistribution::stationary(), em));
  return prototype;
}

struct Replicate {
  bool fitted_ok = false;
  bool recovered = false;
  double worst_tpm = 0.0;
  double worst_mean = 0.0;
  HierarchicalModel model;
};

// ---------------------------------------------------------------------
// CLI plumbing

std::string shell_quote(const std::string &s) { return "'" + s + "'"; }

struct CliRunner {
  std::filesystem::path dir;
  std::string log;

  explicit CliRunner(const std::string &name)
      : dir(name + "_" + std::to_string(::getpid())) {
    std::filesystem::create_directories(dir);
    log = (dir / "cli.log").string();
  }
  ~CliRunner() {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }

  std::string path(const std::string &name) const {
    return (dir / name).string();
  }

  bool run(const std::string &args) const {
    const std::string cmd = std::string(HHMM_CLI_PATH) + " " + args + " >> " +
                            shell_quote(log) + " 2>&1";
    return std::system(cmd.c_str()) == 0;
  }
};

std::vector<std::vector<std::string>> read_csv_rows(const std::string &path) {
  const std::string text = read_text_file(path);
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(
          start, comma == std::string::npos ? std::string::npos
                                            : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

int column_index(const std::vector<std::string> &header,
                 const std::string &name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

} // namespace

int main() {
  Harness harness;

  harness.run(1, "stationary distributions match the dive-study fixtures", 1.0,
              []() -> Outcome {
    const auto gap = [](const TransitionMatrix &tpm,
                        const std::vector<double> &want) {
      const auto got = stationary_distribution(tpm);
      double worst = 0.0;
      for (std::size_t i = 0; i < want.size(); ++i)
        worst = std::max(worst, std::abs(got[i] - want[i]));
      return worst;
    };
    double worst = gap(fixtures::porpoise_internal(),
                       fixtures::porpoise_stationary_internal());
    for (int k = 0; k < 2; ++k)
      worst = std::max(worst, gap(fixtures::porpoise_production(k),
                                  fixtures::porpoise_stationary_production(k)));
    if (worst > 0.002)
      return {false, "worst entry gap " + fmt3(worst) + " > 0.002"};
    return {true, "worst entry gap " + fmt3(worst)};
  });

  harness.run(2, "forward log-likelihood matches exhaustive enumeration", 10.0,
              []() -> Outcome {
    Rng rng(1002);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      const int n = 1 + static_cast<int>(rng.uniform() * 3.0);
      const int t_len = 1 + static_cast<int>(rng.uniform() * 8.0);
      const int n_vars = 1 + static_cast<int>(rng.uniform() * 2.0);
      const auto params = fixtures::random_hmm(rng, n, n_vars);
      const auto series = fixtures::random_series(rng, t_len, n_vars);
      const double scaled = forward_log_likelihood(params, series);
      const double brute = std::log(oracles::enum_likelihood(
          params.tpm, realize_initial(params.initial, params.tpm),
          *params.emissions, series));
      worst = std::max(worst, std::abs(scaled - brute) /
                                  std::max(1.0, std::abs(brute)));
    }
    if (worst > 1e-12)
      return {false, "worst relative gap " + fmt3(worst) + " over 100 draws"};
    return {true, "100 random instances within 1e-12 relative"};
  });

  harness.run(3, "hierarchical log-likelihood matches internal-sequence "
                 "enumeration", 30.0, []() -> Outcome {
    Rng rng(1003);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      const int k = 1 + static_cast<int>(rng.uniform() * 3.0);
      const int n = 1 + static_cast<int>(rng.uniform() * 2.0);
      const int m = 1 + static_cast<int>(rng.uniform() * 5.0);
      std::vector<int> lengths;
      for (int i = 0; i < m; ++i)
        lengths.push_back(1 + static_cast<int>(rng.uniform() * 4.0));
      const auto model = fixtures::random_hierarchical(rng, k, n, 1);
      const auto data = fixtures::random_segmented(rng, lengths, 1);
      const double fast = hierarchical_log_likelihood(model, data);
      const double brute = oracles::enum_hier_log_likelihood(model, data);
      worst = std::max(worst, std::abs(fast - brute) /
                                  std::max(1.0, std::abs(brute)));
    }
    if (worst > 1e-10)
      return {false, "worst relative gap " + fmt3(worst) + " over 50 draws"};
    return {true, "50 random instances within 1e-10 relative"};
  });

  harness.run(4, "degenerate shapes reduce to plain chains", 0.0,
              []() -> Outcome {
    Rng rng(1004);

    // a single internal state: the outer recursion adds nothing
    HierarchicalModel single;
    single.internal_tpm = TransitionMatrix::uniform(1);
    single.internal_initial = InitialDistribution::stationary();
    single.production.push_back(fixtures::random_hmm(rng, 3, 1));
    const auto data = fixtures::random_segmented(rng, {4, 7, 3, 5}, 1);
    double sum = 0.0;
    for (const auto &segment : data.segments)
      sum += forward_log_likelihood(single.production[0], segment);
    const double joint = hierarchical_log_likelihood(single, data);
    if (!close_rel(joint, sum, 1e-12))
      return {false, "K=1 joint " + fmt3(joint) + " vs segment sum " +
                         fmt3(sum)};

    // identical production chains: the internal t.p.m. cannot matter
    HierarchicalModel same;
    same.internal_initial = InitialDistribution::stationary();
    const auto chain = fixtures::random_hmm(rng, 2, 1);
    for (int k = 0; k < 3; ++k) same.production.push_back(chain);
    double baseline = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      same.internal_tpm = fixtures::random_tpm(rng, 3);
      const double value = hierarchical_log_likelihood(same, data);
      if (rep == 0) {
        baseline = value;
      } else if (!close_rel(value, baseline, 1e-10)) {
        return {false, "identical chains: loglik moved by " +
                           fmt3(std::abs(value - baseline))};
      }
    }
    return {true, "K=1 reduction exact, identical chains invariant"};
  });

  harness.run(5, "two-stage decoding matches brute force and dominates "
                 "random paths", 0.0, []() -> Outcome {
    Rng rng(1005);
    for (int rep = 0; rep < 50; ++rep) {
      const int k = 1 + static_cast<int>(rng.uniform() * 3.0);
      const int n = 1 + static_cast<int>(rng.uniform() * 2.0);
      const int m = 1 + static_cast<int>(rng.uniform() * 5.0);
      std::vector<int> lengths;
      for (int i = 0; i < m; ++i)
        lengths.push_back(1 + static_cast<int>(rng.uniform() * 4.0));
      const auto model = fixtures::random_hierarchical(rng, k, n, 1);
      const auto data = fixtures::random_segmented(rng, lengths, 1);

      const auto decoded = decode(model, data);
      const auto brute = oracles::enum_internal_viterbi(model, data);
      if (decoded.internal != brute) {
        // the argmax can be a set (e.g. single-state chains with shared
        // emissions make swapped paths score identically); any member
        // of the set is a correct answer
        const double got =
            oracles::internal_path_log_score(model, data, decoded.internal);
        const double best =
            oracles::internal_path_log_score(model, data, brute);
        if (!close_rel(got, best, 1e-12))
          return {false, "outer decoding differs from enumeration (draw " +
                             std::to_string(rep) + ")"};
      }
      for (int seg = 0; seg < m; ++seg) {
        const auto &chain = model.production[decoded.internal[seg]];
        const auto brute = oracles::enum_viterbi(
            chain.tpm, realize_initial(chain.initial, chain.tpm),
            *chain.emissions, data.segments[seg]);
        if (decoded.production[seg] != brute)
          return {false, "inner decoding differs from enumeration (draw " +
                             std::to_string(rep) + ")"};
      }

      const double best =
          oracles::internal_path_log_score(model, data, decoded.internal);
      std::vector<int> path(m);
      for (int draw = 0; draw < 1000; ++draw) {
        for (int i = 0; i < m; ++i)
          path[i] = static_cast<int>(rng.uniform() * k);
        const double score =
            oracles::internal_path_log_score(model, data, path);
        if (score > best + 1e-9)
          return {false, "random path beats the decoded one (draw " +
                             std::to_string(rep) + ")"};
      }
    }
    return {true, "50 instances, 1000 random paths each"};
  });

  harness.run(6, "scaled forward stays finite and matches the unscaled "
                 "product", 0.0, []() -> Outcome {
    Rng rng(1006);
    const auto params =
        fixtures::make_hmm(fixtures::porpoise_production(0),
                           InitialDistribution::stationary(),
                           fixtures::gamma_emissions({1.0, 5.0, 12.0},
                                                     {0.4, 1.0, 2.0}));
    const auto [states, series] = simulate(params, 100000, rng);
    const double long_loglik = forward_log_likelihood(params, series);
    if (!std::isfinite(long_loglik))
      return {false, "loglik not finite at 100000 observations"};

    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const auto small = fixtures::random_hmm(rng, 2 + rep % 2, 1);
      const auto short_series = fixtures::random_series(rng, 20, 1);
      const double scaled = forward_log_likelihood(small, short_series);
      const double direct = std::log(oracles::direct_product_likelihood(
          small.tpm, realize_initial(small.initial, small.tpm),
          *small.emissions, short_series));
      worst = std::max(worst, std::abs(scaled - direct) /
                                  std::max(1.0, std::abs(direct)));
    }
    if (worst > 1e-12)
      return {false, "scaled vs unscaled gap " + fmt3(worst) + " at T=20"};
    return {true, "finite at T=100000, unscaled match within 1e-12 at T=20"};
  });

  const auto truth = fixtures::porpoise_model();
  std::vector<Replicate> replicates(kReplicates);

  harness.run(7, "deployment-scale parameter recovery", 600.0,
              [&]() -> Outcome {
    const std::vector<int> lengths(kSegments, kSegmentLength);
    const auto prototype = recovery_prototype();
    const std::vector<double> truth_means = {1.0, 5.0, 12.0};

    int passed = 0;
    double worst_tpm = 0.0, worst_mean = 0.0;
    for (int r = 0; r < kReplicates; ++r) {
      Rng sim_rng(4100 + r);
      const auto [states, data] =
          simulate_hierarchical(truth, lengths, sim_rng);

      FitOptions options;
      options.restarts = 10;
      options.seed = 9200 + r;
      options.optimizer = OptimizerKind::Bfgs;
      options.optim.tol = 1e-7;
      const auto result = fit(data, prototype, options);

      auto &rep = replicates[r];
      rep.model = result.model;
      rep.fitted_ok = true;

      const auto aligned =
          apply_alignment(result.model, align_labels(result.model, truth));
      rep.worst_tpm = tpm_gap(aligned.internal_tpm, truth.internal_tpm);
      for (int k = 0; k < 2; ++k)
        rep.worst_tpm = std::max(
            rep.worst_tpm,
            tpm_gap(aligned.production[k].tpm, truth.production[k].tpm));
      for (int i = 0; i < 3; ++i) {
        const double mean =
            mean_of(aligned.production[0].emissions->variables[0].by_state[i]);
        rep.worst_mean = std::max(
            rep.worst_mean,
            std::abs(mean - truth_means[i]) / truth_means[i]);
      }
      rep.recovered = rep.worst_tpm <= 0.05 && rep.worst_mean <= 0.05;
      if (rep.recovered) ++passed;
      worst_tpm = std::max(worst_tpm, rep.worst_tpm);
      worst_mean = std::max(worst_mean, rep.worst_mean);
    }

    const std::string detail =
        std::to_string(passed) + "/" + std::to_string(kReplicates) +
        " replicates within 0.05 t.p.m. / 5% means (worst gaps " +
        fmt3(worst_tpm) + ", " + fmt3(100.0 * worst_mean) + "%)";
    return {passed >= 9, detail};
  });

  harness.run(8, "pseudo-residuals from refitted models are standard "
                 "normal", 0.0, [&]() -> Outcome {
    int passed = 0;
    double min_p = 1.0;
    for (int r = 0; r < kReplicates; ++r) {
      if (!replicates[r].fitted_ok)
        return {false, "needs the fitted models of the recovery check"};
      const auto &model = replicates[r].model;
      const std::vector<int> lengths(360, kSegmentLength);
      Rng sim_rng(5200 + r);
      const auto [states, data] =
          simulate_hierarchical(model, lengths, sim_rng);
      const auto decoded = decode(model, data);
      Rng resid_rng(6300 + r);
      const auto residuals =
          hierarchical_pseudo_residuals(model, data, decoded, resid_rng);
      std::vector<double> pooled;
      pooled.reserve(10080);
      for (const auto &segment : residuals)
        pooled.insert(pooled.end(), segment.begin(), segment.end());
      const auto ks = ks_test_normal(pooled);
      min_p = std::min(min_p, ks.p_value);
      if (ks.n >= 10000 && ks.p_value > 0.01) ++passed;
    }
    const std::string detail =
        std::to_string(passed) + "/" + std::to_string(kReplicates) +
        " replicates with p > 0.01 on 10080 points (min p " + fmt3(min_p) +
        ")";
    return {passed >= 9, detail};
  });

  harness.run(9, "working-scale round trips are identities", 0.0,
              []() -> Outcome {
    Rng rng(1009);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
      const int n = 2 + rep % 3;
      WorkingTpm w;
      w.n = n;
      for (int i = 0; i < n * (n - 1); ++i)
        w.betas.push_back(rng.uniform_open(-10.0, 10.0));
      const auto natural = working_to_natural(w);
      const auto again = working_to_natural(natural_to_working(natural));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          worst = std::max(worst, std::abs(again(i, j) - natural(i, j)) /
                                      std::max(1.0, natural(i, j)));
    }
    if (worst > 1e-10)
      return {false, "t.p.m. round-trip gap " + fmt3(worst)};

    HierarchicalModel prototype;
    prototype.internal_tpm = TransitionMatrix::uniform(2);
    prototype.internal_initial = InitialDistribution::estimated({0.0});
    auto em = std::make_shared<EmissionModel>();
    EmissionVariable duration;
    duration.name = "duration";
    EmissionVariable wiggle;
    wiggle.name = "wiggliness";
    EmissionVariable noise;
    noise.name = "noise";
    for (int i = 0; i < 3; ++i) {
      duration.by_state.push_back(GammaParams{1.0, 1.0});
      wiggle.by_state.push_back(ZeroInflatedGammaParams{0.1, {1.0, 1.0}});
      noise.by_state.push_back(NormalParams{0.0, 1.0});
    }
    em->variables = {duration, wiggle, noise};
    for (int k = 0; k < 2; ++k)
      prototype.production.push_back(fixtures::make_hmm(
          TransitionMatrix::uniform(3),
          InitialDistribution::estimated({0.0, 0.0}),
          std::shared_ptr<const EmissionModel>(em)));
    const ModelLayout layout(prototype);

    double worst_pack = 0.0;
    std::vector<double> theta(layout.n_params());
    for (int rep = 0; rep < 1000; ++rep) {
      for (auto &value : theta) value = rng.uniform_open(-10.0, 10.0);
      const auto packed = layout.pack(layout.unpack(theta));
      for (int i = 0; i < layout.n_params(); ++i)
        worst_pack = std::max(worst_pack,
                              std::abs(packed[i] - theta[i]) /
                                  std::max(1.0, std::abs(theta[i])));
    }
    if (worst_pack > 1e-10)
      return {false, "pack round-trip gap " + fmt3(worst_pack)};
    return {true, "1000 t.p.m. and 1000 pack round trips within 1e-10"};
  });

  harness.run(10, "command-line pipeline is deterministic and decodes "
                  "accurately", 0.0, [&]() -> Outcome {
    CliRunner cli("acceptance_cli");

    StoredModel truth_stored;
    truth_stored.model = truth;
    truth_stored.spec.k_internal = 2;
    truth_stored.spec.n_production = 3;
    truth_stored.spec.variables = {{"y", Family::Gamma, Transform::None}};
    truth_stored.spec.segmentation.mode = SegmentationRule::Mode::ByCount;
    truth_stored.spec.segmentation.count = kSegmentLength;
    save_model(truth_stored, cli.path("truth.json"));

    write_text_atomic(cli.path("config.json"), R"({
      "k_internal": 2,
      "n_production": 3,
      "variables": [{"name": "y", "family": "gamma"}],
      "segmentation": {"mode": "by_count", "n_obs": 28}
    })");

    const std::string simulate_args =
        " --segments " + std::to_string(kSegments) + " --lengths " +
        std::to_string(kSegmentLength) + " --seed 11";
    if (!cli.run("simulate --model " + cli.path("truth.json") +
                 simulate_args + " --out " + cli.path("sim.csv")) ||
        !cli.run("simulate --model " + cli.path("truth.json") +
                 simulate_args + " --out " + cli.path("sim2.csv")))
      return {false, "simulate failed"};
    if (read_text_file(cli.path("sim.csv")) !=
        read_text_file(cli.path("sim2.csv")))
      return {false, "simulate is not deterministic under a fixed seed"};

    const std::string fit_args = "fit " + cli.path("sim.csv") + " --config " +
                                 cli.path("config.json") +
                                 " --restarts 3 --seed 5 --tol 1e-7"
                                 " --optimizer bfgs --out ";
    if (!cli.run(fit_args + cli.path("fitted.json")) ||
        !cli.run(fit_args + cli.path("fitted2.json")))
      return {false, "fit failed"};
    if (read_text_file(cli.path("fitted.json")) !=
        read_text_file(cli.path("fitted2.json")))
      return {false, "fit is not deterministic under a fixed seed"};

    const std::string decode_args = "decode " + cli.path("sim.csv") +
                                    " --model " + cli.path("fitted.json") +
                                    " --out ";
    if (!cli.run(decode_args + cli.path("decoded.csv")) ||
        !cli.run(decode_args + cli.path("decoded2.csv")))
      return {false, "decode failed"};
    if (read_text_file(cli.path("decoded.csv")) !=
        read_text_file(cli.path("decoded2.csv")))
      return {false, "decode is not deterministic"};

    if (!cli.run("residuals " + cli.path("sim.csv") + " --model " +
                 cli.path("fitted.json") + " --seed 1 --out " +
                 cli.path("residuals.csv")))
      return {false, "residuals failed"};
    if (!cli.run("summarize --model " + cli.path("fitted.json")))
      return {false, "summarize failed"};

    // truth labels, one per segment, from the simulated file
    const auto sim_rows = read_csv_rows(cli.path("sim.csv"));
    const int truth_col = column_index(sim_rows[0], "true_internal");
    if (truth_col < 0) return {false, "simulated file lacks truth columns"};
    std::vector<int> truth_internal;
    for (std::size_t i = 1; i < sim_rows.size(); i += kSegmentLength)
      truth_internal.push_back(std::stoi(sim_rows[i][truth_col]) - 1);

    const auto decoded_rows = read_csv_rows(cli.path("decoded.csv"));
    const int state_col = column_index(decoded_rows[0], "internal_state");
    const int segment_col = column_index(decoded_rows[0], "segment");
    std::vector<int> decoded_internal(truth_internal.size(), -1);
    for (std::size_t i = 1; i < decoded_rows.size(); ++i) {
      const int segment = std::stoi(decoded_rows[i][segment_col]) - 1;
      decoded_internal[segment] = std::stoi(decoded_rows[i][state_col]) - 1;
    }

    const auto fitted = load_model(cli.path("fitted.json"));
    const auto alignment = align_labels(fitted.model, truth);
    std::vector<int> role_of(alignment.internal.size());
    for (std::size_t k = 0; k < alignment.internal.size(); ++k)
      role_of[alignment.internal[k]] = static_cast<int>(k);

    int hits = 0;
    for (std::size_t m = 0; m < truth_internal.size(); ++m)
      if (role_of[decoded_internal[m]] == truth_internal[m]) ++hits;
    const double accuracy =
        static_cast<double>(hits) / static_cast<double>(truth_internal.size());
    const std::string detail = "deterministic outputs, internal-state "
                               "accuracy " +
                               fmt3(100.0 * accuracy) + "%";
    return {accuracy >= 0.90, detail};
  });

  std::cout << (10 - harness.failures) << " of 10 criteria passed"
            << std::endl;
  return harness.failures == 0 ? 0 : 1;
}
