#ifndef HHMM_RNG_HPP
#define HHMM_RNG_HPP

#include <cstdint>
#include <random>
#include <span>

namespace hhmm {

// Seedable random stream with the samplers the library needs. The
// distribution transforms are implemented here (not via std::*_distribution)
// so that a given seed produces the same draws on every platform.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Derive an independent stream for a substream index (restart, thread).
  static Rng substream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform();

  // Uniform on (lo, hi), endpoints excluded.
  double uniform_open(double lo, double hi);

  // Standard normal via Box-Muller (one spare cached).
  double normal();

  // Gamma(shape, rate) via Marsaglia-Tsang squeeze; shape<1 handled by the
  // boosting identity Gamma(a) = Gamma(a+1) * U^(1/a).
  double gamma(double shape, double rate);

  // Index in [0, n) drawn from an (unnormalized is fine) probability vector.
  int categorical(std::span<const double> probs);

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

} // namespace hhmm

#endif
