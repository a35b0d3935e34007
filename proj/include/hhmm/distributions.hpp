#ifndef HHMM_DISTRIBUTIONS_HPP
#define HHMM_DISTRIBUTIONS_HPP

#include "hhmm/rng.hpp"

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace hhmm {

// Univariate emission densities. Gamma is shape/rate; the zero-inflated
// variant places a point mass at exactly 0 and (1 - zero_mass) times a
// gamma density on (0, inf). Densities with a point mass are taken with
// respect to the mixed reference measure (counting measure at 0 plus
// Lebesgue measure on the positive half-line), so log_pdf(0) is the log
// of the point-mass probability itself.

struct GammaParams {
  double shape = 1.0; // dimensionless
  double rate = 1.0;  // 1 / units of the observable
  double mean() const { return shape / rate; }
  double sd() const;
};

struct ZeroInflatedGammaParams {
  double zero_mass = 0.0; // probability of an exact zero
  GammaParams gamma;
};

struct NormalParams {
  double mean = 0.0;
  double sd = 1.0;
};

enum class Family { Gamma, ZeroInflatedGamma, Normal };

using Density = std::variant<GammaParams, ZeroInflatedGammaParams, NormalParams>;

Family family_of(const Density &d);
const char *family_name(Family f);
Family family_from_name(const std::string &name);

// Per-variable observation-scale transform. Data is transformed on ingest
// and fitted on the transformed scale; simulated output is transformed
// back. Reported emission moments stay on the transformed scale.
enum class Transform { None, Sqrt };
const char *transform_name(Transform t);
Transform transform_from_name(const std::string &name);
double apply_transform(Transform t, double y);  // NaN passes through
double invert_transform(Transform t, double y);

// Moment map: shape = mean^2/sd^2, rate = mean/sd^2. Inverse of
// (mean(), sd()) on GammaParams.
GammaParams from_mean_sd(double mean, double sd);

// Natural-log density. y must be finite; y < 0 is a domain error for the
// gamma families. At y == 0 the plain gamma returns the exact limit of
// its density (-inf for shape > 1, log(rate) for shape == 1, +inf for
// shape < 1).
double log_pdf(const Density &d, double y);

// Cumulative distribution F(y) = Pr(Y <= y).
double cdf(const Density &d, double y);

// One draw. Zero-inflated returns exactly 0 with probability zero_mass.
double sample(const Density &d, Rng &rng);

double mean_of(const Density &d);
double sd_of(const Density &d);

// Unconstrained working-scale twin used by the optimizer:
//   gamma             -> (log shape, log rate)
//   zero-infl. gamma  -> (log shape, log rate, logit zero_mass)
//   normal            -> (mean, log sd)
// from_working clamps log-parameters to +-80 and probabilities to
// [1e-12, 1-1e-12] so any finite vector yields a valid density.
int n_working_params(Family f);
void density_to_working(const Density &d, std::span<double> out);
Density density_from_working(Family f, std::span<const double> in);

// State-dependent distributions: for each of R variables, one density per
// production state. The joint density of a multivariate observation given
// the state is the product over variables (contemporaneous conditional
// independence); missing entries contribute a factor of 1.
struct EmissionVariable {
  std::string name;
  std::vector<Density> by_state; // size N
};

struct EmissionModel {
  std::vector<EmissionVariable> variables;

  int n_states() const {
    return variables.empty() ? 0 : static_cast<int>(variables[0].by_state.size());
  }
  int n_vars() const { return static_cast<int>(variables.size()); }

  // Throws invalid-parameter unless every (state, variable) cell holds a
  // valid density and all variables agree on N >= 1, R >= 1.
  void validate() const;

  // Sum over variables of log f_i^r(row[r]); NaN entries are skipped.
  double state_log_density(int state, std::span<const double> row) const;

  // Draw one R-vector for the given state.
  std::vector<double> sample_row(int state, Rng &rng) const;
};

} // namespace hhmm

#endif
