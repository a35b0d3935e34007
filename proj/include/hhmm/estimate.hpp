#ifndef HHMM_ESTIMATE_HPP
#define HHMM_ESTIMATE_HPP

#include "hhmm/hier.hpp"
#include "hhmm/optim.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hhmm {

// Maps a hierarchical model to and from the optimizer's flat working
// vector. The prototype fixes everything the vector does not carry:
// dimensions, emission families, sharing, initial-distribution policies
// and any Fixed initial vectors. Layout order:
//   internal t.p.m. betas                K(K-1)
//   internal initial logits              K-1   (Estimated policy only)
//   production t.p.m. betas, chain-major K * N(N-1)
//   production initial logits per chain  N-1   (Estimated policy only)
//   emission working parameters          one block per emission model
//     (a block is state-major, variables within a state)
class ModelLayout {
public:
  explicit ModelLayout(HierarchicalModel prototype);

  int n_params() const { return n_params_; }
  const HierarchicalModel &prototype() const { return prototype_; }

  // Throws a layout error when the model does not match the prototype's
  // dimensions, policies or families.
  std::vector<double> pack(const HierarchicalModel &model,
                           Warnings *warnings = nullptr) const;

  // Any finite vector of the right length yields a valid model. Throws a
  // layout error on a length mismatch.
  HierarchicalModel unpack(std::span<const double> theta) const;

private:
  HierarchicalModel prototype_;
  int n_params_ = 0;
};

enum class OptimizerKind { NelderMead, Bfgs };
OptimizerKind optimizer_from_name(const std::string &name);
const char *optimizer_name(OptimizerKind kind);

struct FitOptions {
  int restarts = 10;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::NelderMead;
  OptimOptions optim;        // tol 1e-8 on objective change, max_iter 5000
  int threads = 0;           // 0: take HHMM_THREADS, else 1
  std::vector<double> start; // optional working vector for restart 0
};

struct FitResult {
  HierarchicalModel model;
  double loglik = 0.0;
  int n_params = 0;
  double aic = 0.0;
  double bic = 0.0;
  bool converged = false;
  int n_restarts_used = 0;
  std::uint64_t best_restart_seed = 0; // substream index of the winner
  Warnings warnings;
};

// Data-driven starting point: per-variable quantile splits of the pooled
// observations give state-ordered emission moments; t.p.m. betas start at
// -2 (diagonally dominant), with a small deterministic tilt per chain so
// identical chains do not start on a symmetry saddle.
HierarchicalModel initial_model(const HierarchicalModel &prototype,
                                const SegmentedSeries &data);

// Maximum likelihood via direct numerical minimization of the negative
// hierarchical log-likelihood over the working vector. Restart 0 uses
// options.start if given, the data-driven start otherwise; each further
// restart perturbs the start from its own seeded substream. Restarts run
// independently (HHMM_THREADS may parallelize them) and the best final
// value wins, ties toward the lower restart index. Throws fit-failure
// when every restart is discarded or fails.
FitResult fit(const SegmentedSeries &data, const HierarchicalModel &prototype,
              const FitOptions &options = {});

// Permutations aligning a fitted model's state labels to a reference with
// the same (K, N): internal[k] / production[i] give the fitted label that
// plays the reference's role k / i. Chosen by brute force to minimize the
// summed absolute differences of emission means plus t.p.m. entries.
struct LabelAlignment {
  std::vector<int> internal;
  std::vector<int> production;
};
LabelAlignment align_labels(const HierarchicalModel &fitted,
                            const HierarchicalModel &reference);

// The fitted model with its states relabeled per the alignment.
HierarchicalModel apply_alignment(const HierarchicalModel &fitted,
                                  const LabelAlignment &alignment);

} // namespace hhmm

#endif
