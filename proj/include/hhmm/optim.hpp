#ifndef HHMM_OPTIM_HPP
#define HHMM_OPTIM_HPP

#include <functional>
#include <span>
#include <vector>

namespace hhmm {

// Derivative-free / finite-difference minimizers for smooth objectives of
// moderate dimension. Non-finite objective values are treated as +inf, so
// the search simply retreats from bad regions.

using Objective = std::function<double(std::span<const double>)>;

struct OptimOptions {
  double tol = 1e-8;      // relative tolerance on objective change
  int max_iter = 5000;
  double fd_step = 1e-6;  // finite-difference step scale (BFGS)
};

struct OptimResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  long n_evals = 0;
};

// Nelder-Mead simplex with standard reflection/expansion/contraction
// coefficients.
OptimResult nelder_mead(const Objective &f, std::vector<double> x0,
                        const OptimOptions &options = {});

// Quasi-Newton (BFGS) with central finite-difference gradients and a
// backtracking Armijo line search.
OptimResult bfgs(const Objective &f, std::vector<double> x0,
                 const OptimOptions &options = {});

// Central-difference gradient with per-coordinate step
// h_i = step_scale * max(1, |x_i|). Exposed for smoothness checks.
std::vector<double> finite_diff_gradient(const Objective &f,
                                         std::span<const double> x,
                                         double step_scale);

} // namespace hhmm

#endif
