#include "hhmm/distributions.hpp"

#include "hhmm/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

namespace hhmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogParamCap = 80.0;  // exp stays comfortably finite
constexpr double kProbFloor = 1e-12;

void check_gamma(const GammaParams &g) {
  if (!(g.shape > 0.0) || !(g.rate > 0.0) || !std::isfinite(g.shape) ||
      !std::isfinite(g.rate))
    throw Error(ErrorCategory::data,
                "invalid-parameter: gamma requires finite shape > 0 and rate > 0");
}

void check_zig(const ZeroInflatedGammaParams &z) {
  if (!(z.zero_mass >= 0.0 && z.zero_mass <= 1.0) || !std::isfinite(z.zero_mass))
    throw Error(ErrorCategory::data,
                "invalid-parameter: zero_mass must lie in [0,1]");
  check_gamma(z.gamma);
}

void check_normal(const NormalParams &n) {
  if (!(n.sd > 0.0) || !std::isfinite(n.sd) || !std::isfinite(n.mean))
    throw Error(ErrorCategory::data,
                "invalid-parameter: normal requires finite mean and sd > 0");
}

void check_nonnegative(double y) {
  if (y < 0.0)
    throw Error(ErrorCategory::data,
                "domain: gamma-family observation must be >= 0");
}

double gamma_log_pdf(const GammaParams &g, double y) {
  if (y == 0.0) {
    if (g.shape > 1.0) return -kInf;
    if (g.shape == 1.0) return std::log(g.rate);
    return kInf; // density diverges at the origin for shape < 1
  }
  return g.shape * std::log(g.rate) - std::lgamma(g.shape) +
         (g.shape - 1.0) * std::log(y) - g.rate * y;
}

double logit(double p) { return std::log(p) - std::log1p(-p); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

double GammaParams::sd() const { return std::sqrt(shape) / rate; }

Family family_of(const Density &d) {
  if (std::holds_alternative<GammaParams>(d)) return Family::Gamma;
  if (std::holds_alternative<ZeroInflatedGammaParams>(d))
    return Family::ZeroInflatedGamma;
  return Family::Normal;
}

const char *family_name(Family f) {
  switch (f) {
    case Family::Gamma: return "gamma";
    case Family::ZeroInflatedGamma: return "zero_inflated_gamma";
    case Family::Normal: return "normal";
  }
  return "?";
}

Family family_from_name(const std::string &name) {
  if (name == "gamma") return Family::Gamma;
  if (name == "zero_inflated_gamma") return Family::ZeroInflatedGamma;
  if (name == "normal") return Family::Normal;
  throw Error(ErrorCategory::data, "schema: unknown family '" + name + "'");
}

const char *transform_name(Transform t) {
  return t == Transform::Sqrt ? "sqrt" : "none";
}

Transform transform_from_name(const std::string &name) {
  if (name == "none") return Transform::None;
  if (name == "sqrt") return Transform::Sqrt;
  throw Error(ErrorCategory::data, "schema: unknown transform '" + name + "'");
}

double apply_transform(Transform t, double y) {
  if (t == Transform::None || is_missing(y)) return y;
  if (y < 0.0)
    throw Error(ErrorCategory::data,
                "domain: sqrt transform needs non-negative values");
  return std::sqrt(y);
}

double invert_transform(Transform t, double y) {
  if (t == Transform::None || is_missing(y)) return y;
  return y * y;
}

GammaParams from_mean_sd(double mean, double sd) {
  if (!(mean > 0.0) || !(sd > 0.0) || !std::isfinite(mean) || !std::isfinite(sd))
    throw Error(ErrorCategory::data,
                "domain: from_mean_sd needs mean > 0 and sd > 0");
  return GammaParams{mean * mean / (sd * sd), mean / (sd * sd)};
}

double log_pdf(const Density &d, double y) {
  if (!std::isfinite(y))
    throw Error(ErrorCategory::data, "domain: observation must be finite");
  if (const auto *g = std::get_if<GammaParams>(&d)) {
    check_gamma(*g);
    check_nonnegative(y);
    return gamma_log_pdf(*g, y);
  }
  if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d)) {
    check_zig(*z);
    check_nonnegative(y);
    if (y == 0.0) return std::log(z->zero_mass);
    return std::log1p(-z->zero_mass) + gamma_log_pdf(z->gamma, y);
  }
  const auto &n = std::get<NormalParams>(d);
  check_normal(n);
  const double zscore = (y - n.mean) / n.sd;
  return -0.5 * zscore * zscore - std::log(n.sd) - 0.5 * std::log(2.0 * M_PI);
}

double cdf(const Density &d, double y) {
  if (!std::isfinite(y))
    throw Error(ErrorCategory::data, "domain: observation must be finite");
  if (const auto *g = std::get_if<GammaParams>(&d)) {
    check_gamma(*g);
    check_nonnegative(y);
    return boost::math::gamma_p(g->shape, g->rate * y);
  }
  if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d)) {
    check_zig(*z);
    check_nonnegative(y);
    const double fg = boost::math::gamma_p(z->gamma.shape, z->gamma.rate * y);
    return z->zero_mass + (1.0 - z->zero_mass) * fg;
  }
  const auto &n = std::get<NormalParams>(d);
  check_normal(n);
  return 0.5 * std::erfc(-(y - n.mean) / (n.sd * M_SQRT2));
}

double sample(const Density &d, Rng &rng) {
  if (const auto *g = std::get_if<GammaParams>(&d)) {
    check_gamma(*g);
    return rng.gamma(g->shape, g->rate);
  }
  if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d)) {
    check_zig(*z);
    if (rng.uniform() < z->zero_mass) return 0.0;
    return rng.gamma(z->gamma.shape, z->gamma.rate);
  }
  const auto &n = std::get<NormalParams>(d);
  check_normal(n);
  return n.mean + n.sd * rng.normal();
}

double mean_of(const Density &d) {
  if (const auto *g = std::get_if<GammaParams>(&d)) return g->mean();
  if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d))
    return (1.0 - z->zero_mass) * z->gamma.mean();
  return std::get<NormalParams>(d).mean;
}

double sd_of(const Density &d) {
  if (const auto *g = std::get_if<GammaParams>(&d)) return g->sd();
  if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d)) {
    // var of the mixture of {0} and the gamma part
    const double p = 1.0 - z->zero_mass;
    const double m = z->gamma.mean();
    const double v = z->gamma.sd() * z->gamma.sd();
    return std::sqrt(p * (v + m * m) - p * p * m * m);
  }
  return std::get<NormalParams>(d).sd;
}

int n_working_params(Family f) {
  switch (f) {
    case Family::Gamma: return 2;
    case Family::ZeroInflatedGamma: return 3;
    case Family::Normal: return 2;
  }
  return 0;
}

void density_to_working(const Density &d, std::span<double> out) {
  if (const auto *g = std::get_if<GammaParams>(&d)) {
    check_gamma(*g);
    out[0] = std::log(g->shape);
    out[1] = std::log(g->rate);
    return;
  }
  if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d)) {
    check_zig(*z);
    out[0] = std::log(z->gamma.shape);
    out[1] = std::log(z->gamma.rate);
    out[2] = logit(std::clamp(z->zero_mass, kProbFloor, 1.0 - kProbFloor));
    return;
  }
  const auto &n = std::get<NormalParams>(d);
  check_normal(n);
  out[0] = n.mean;
  out[1] = std::log(n.sd);
}

Density density_from_working(Family f, std::span<const double> in) {
  for (double v : in)
    if (!std::isfinite(v))
      throw Error(ErrorCategory::data,
                  "invalid-parameter: working emission parameters must be finite");
  const auto safe_exp = [](double x) {
    return std::exp(std::clamp(x, -kLogParamCap, kLogParamCap));
  };
  switch (f) {
    case Family::Gamma:
      return GammaParams{safe_exp(in[0]), safe_exp(in[1])};
    case Family::ZeroInflatedGamma:
      return ZeroInflatedGammaParams{
          std::clamp(sigmoid(in[2]), kProbFloor, 1.0 - kProbFloor),
          GammaParams{safe_exp(in[0]), safe_exp(in[1])}};
    case Family::Normal:
      return NormalParams{in[0], safe_exp(in[1])};
  }
  throw Error(ErrorCategory::data, "invalid-parameter: unknown family");
}

void EmissionModel::validate() const {
  if (variables.empty())
    throw Error(ErrorCategory::data,
                "invalid-parameter: emission model needs at least one variable");
  const std::size_t n = variables[0].by_state.size();
  if (n == 0)
    throw Error(ErrorCategory::data,
                "invalid-parameter: emission model needs at least one state");
  for (const auto &var : variables) {
    if (var.by_state.size() != n)
      throw Error(ErrorCategory::data,
                  "invalid-parameter: variable '" + var.name +
                      "' disagrees on the number of states");
    for (const auto &d : var.by_state) log_pdf(d, 1.0);
  }
}

double EmissionModel::state_log_density(int state,
                                        std::span<const double> row) const {
  double sum = 0.0;
  for (std::size_t r = 0; r < variables.size(); ++r) {
    const double y = row[r];
    if (is_missing(y)) continue;
    sum += log_pdf(variables[r].by_state[state], y);
  }
  return sum;
}

std::vector<double> EmissionModel::sample_row(int state, Rng &rng) const {
  std::vector<double> row(variables.size());
  for (std::size_t r = 0; r < variables.size(); ++r)
    row[r] = sample(variables[r].by_state[state], rng);
  return row;
}

} // namespace hhmm
