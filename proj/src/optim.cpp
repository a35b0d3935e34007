#include "hhmm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hhmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double guarded(const Objective &f, std::span<const double> x, long &n_evals) {
  ++n_evals;
  const double v = f(x);
  return std::isfinite(v) ? v : kInf;
}

bool small_change(double f_old, double f_new, double tol) {
  return std::abs(f_old - f_new) <= tol * (std::abs(f_new) + tol);
}

} // namespace

OptimResult nelder_mead(const Objective &f, std::vector<double> x0,
                        const OptimOptions &options) {
  const int dim = static_cast<int>(x0.size());
  OptimResult res;
  if (dim == 0) {
    res.x = std::move(x0);
    res.value = f(res.x);
    res.converged = true;
    res.n_evals = 1;
    return res;
  }

  // dimension-adaptive coefficients (classic values at dim 2); a fixed
  // expansion/shrink pair lets the simplex collapse prematurely once the
  // dimension grows past a dozen parameters
  const double d = std::max(dim, 2);
  const double alpha = 1.0;            // reflection
  const double gamma = 1.0 + 2.0 / d;  // expansion
  const double rho = 0.75 - 0.5 / d;   // contraction
  const double sigma = 1.0 - 1.0 / d;  // shrink

  long n_evals = 0;
  std::vector<std::vector<double>> simplex(dim + 1, x0);
  std::vector<double> fx(dim + 1);
  for (int i = 0; i < dim; ++i)
    simplex[i + 1][i] += 0.25 * std::max(1.0, std::abs(x0[i]));
  for (int i = 0; i <= dim; ++i) fx[i] = guarded(f, simplex[i], n_evals);

  std::vector<int> order(dim + 1);
  std::vector<double> centroid(dim), trial(dim), expanded(dim);
  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return fx[a] < fx[b]; });
    const int best = order[0], worst = order[dim], second_worst = order[dim - 1];

    if (std::isfinite(fx[worst]) &&
        small_change(fx[worst], fx[best], options.tol)) {
      res.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (int i = 0; i <= dim; ++i) {
      if (i == worst) continue;
      for (int j = 0; j < dim; ++j) centroid[j] += simplex[i][j];
    }
    for (double &c : centroid) c /= dim;

    for (int j = 0; j < dim; ++j)
      trial[j] = centroid[j] + alpha * (centroid[j] - simplex[worst][j]);
    const double f_reflect = guarded(f, trial, n_evals);

    if (f_reflect < fx[best]) {
      for (int j = 0; j < dim; ++j)
        expanded[j] = centroid[j] + gamma * (trial[j] - centroid[j]);
      const double f_expand = guarded(f, expanded, n_evals);
      if (f_expand < f_reflect) {
        simplex[worst] = expanded;
        fx[worst] = f_expand;
      } else {
        simplex[worst] = trial;
        fx[worst] = f_reflect;
      }
    } else if (f_reflect < fx[second_worst]) {
      simplex[worst] = trial;
      fx[worst] = f_reflect;
    } else {
      // contraction, outside or inside of the worst vertex
      const bool outside = f_reflect < fx[worst];
      const auto &anchor = outside ? trial : simplex[worst];
      std::vector<double> contracted(dim);
      for (int j = 0; j < dim; ++j)
        contracted[j] = centroid[j] + rho * (anchor[j] - centroid[j]);
      const double f_contract = guarded(f, contracted, n_evals);
      if (f_contract < std::min(f_reflect, fx[worst])) {
        simplex[worst] = contracted;
        fx[worst] = f_contract;
      } else {
        for (int i = 0; i <= dim; ++i) {
          if (i == best) continue;
          for (int j = 0; j < dim; ++j)
            simplex[i][j] =
                simplex[best][j] + sigma * (simplex[i][j] - simplex[best][j]);
          fx[i] = guarded(f, simplex[i], n_evals);
        }
      }
    }
  }

  const int best =
      static_cast<int>(std::min_element(fx.begin(), fx.end()) - fx.begin());
  res.x = simplex[best];
  res.value = fx[best];
  res.iterations = iter;
  res.n_evals = n_evals;
  return res;
}

std::vector<double> finite_diff_gradient(const Objective &f,
                                         std::span<const double> x,
                                         double step_scale) {
  std::vector<double> grad(x.size());
  std::vector<double> probe(x.begin(), x.end());
  long n_evals = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step_scale * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = guarded(f, probe, n_evals);
    probe[i] = x[i] - h;
    const double fm = guarded(f, probe, n_evals);
    probe[i] = x[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

OptimResult bfgs(const Objective &f, std::vector<double> x0,
                 const OptimOptions &options) {
  const int dim = static_cast<int>(x0.size());
  OptimResult res;
  long n_evals = 0;
  if (dim == 0) {
    res.x = std::move(x0);
    res.value = guarded(f, res.x, n_evals);
    res.converged = true;
    res.n_evals = n_evals;
    return res;
  }

  std::vector<double> x = std::move(x0);
  double fx = guarded(f, x, n_evals);
  auto grad_at = [&](std::span<const double> p) {
    auto g = finite_diff_gradient(f, p, options.fd_step);
    n_evals += 2 * dim;
    return g;
  };
  std::vector<double> grad = grad_at(x);

  // inverse Hessian approximation, dense
  std::vector<double> h_inv(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i) h_inv[i * dim + i] = 1.0;

  std::vector<double> direction(dim), x_new(dim), grad_new(dim), s(dim), y(dim);
  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    for (int i = 0; i < dim; ++i) {
      double d = 0.0;
      for (int j = 0; j < dim; ++j) d += h_inv[i * dim + j] * grad[j];
      direction[i] = -d;
    }
    double descent = 0.0;
    for (int i = 0; i < dim; ++i) descent += direction[i] * grad[i];
    if (descent >= 0.0) {
      // reset to steepest descent if the approximation went bad
      for (int i = 0; i < dim; ++i) {
        direction[i] = -grad[i];
        for (int j = 0; j < dim; ++j)
          h_inv[i * dim + j] = (i == j) ? 1.0 : 0.0;
      }
      descent = 0.0;
      for (int i = 0; i < dim; ++i) descent += direction[i] * grad[i];
      if (descent >= 0.0) {
        res.converged = true; // zero gradient
        break;
      }
    }

    double step = 1.0;
    double f_new = kInf;
    bool improved = false;
    for (int backtrack = 0; backtrack < 40; ++backtrack) {
      for (int i = 0; i < dim; ++i) x_new[i] = x[i] + step * direction[i];
      f_new = guarded(f, x_new, n_evals);
      if (f_new <= fx + 1e-4 * step * descent) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      res.converged = true; // no progress possible along the search direction
      break;
    }

    grad_new = grad_at(x_new);
    double sty = 0.0;
    for (int i = 0; i < dim; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = grad_new[i] - grad[i];
      sty += s[i] * y[i];
    }
    const bool done = small_change(fx, f_new, options.tol);
    x = x_new;
    const double f_prev = fx;
    fx = f_new;
    grad = grad_new;
    if (done && small_change(f_prev, fx, options.tol)) {
      res.converged = true;
      ++iter;
      break;
    }

    if (sty > 1e-12) {
      // BFGS update of the inverse Hessian
      const double rho_k = 1.0 / sty;
      std::vector<double> hy(dim, 0.0);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) hy[i] += h_inv[i * dim + j] * y[j];
      double yhy = 0.0;
      for (int i = 0; i < dim; ++i) yhy += y[i] * hy[i];
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
          h_inv[i * dim + j] += (1.0 + rho_k * yhy) * rho_k * s[i] * s[j] -
                                rho_k * (hy[i] * s[j] + s[i] * hy[j]);
    }
  }

  res.x = std::move(x);
  res.value = fx;
  res.iterations = iter;
  res.n_evals = n_evals;
  return res;
}

} // namespace hhmm
