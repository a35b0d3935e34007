#ifndef HHMM_SERIES_HPP
#define HHMM_SERIES_HPP

#include "hhmm/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace hhmm {

// One fine-scale block of multivariate observations (T rows of R values,
// row-major, NaN = missing).
struct ObservationSeries {
  int n_vars = 0;
  std::vector<double> values;

  ObservationSeries() = default;
  ObservationSeries(int n_vars_, std::vector<double> values_)
      : n_vars(n_vars_), values(std::move(values_)) {
    if (n_vars <= 0 || values.size() % static_cast<std::size_t>(n_vars) != 0)
      throw Error(ErrorCategory::data,
                  "invalid-parameter: observation series shape mismatch");
  }

  int length() const {
    return n_vars == 0 ? 0 : static_cast<int>(values.size()) / n_vars;
  }
  std::span<const double> row(int t) const {
    return {values.data() + static_cast<std::size_t>(t) * n_vars,
            static_cast<std::size_t>(n_vars)};
  }
  double at(int t, int r) const {
    return values[static_cast<std::size_t>(t) * n_vars + r];
  }
};

// M segments of (possibly unequal-length) series, each governed by one
// internal state. group_of_segment marks independent replicates (e.g. one
// animal each); the internal chain restarts at each group boundary and
// the log-likelihood sums over groups. Segments of a group are contiguous.
struct SegmentedSeries {
  std::vector<std::string> variable_names;
  std::vector<ObservationSeries> segments;
  std::vector<std::string> segment_labels; // start timestamp or trial index
  std::vector<int> group_of_segment;       // defaults to a single group

  int m_segments() const { return static_cast<int>(segments.size()); }
  int n_vars() const {
    return segments.empty() ? static_cast<int>(variable_names.size())
                            : segments[0].n_vars;
  }
  long total_observations() const {
    long t = 0;
    for (const auto &s : segments) t += s.length();
    return t;
  }

  void validate() const;

  // Half-open [begin, end) segment ranges, one per replicate group.
  std::vector<std::pair<int, int>> group_ranges() const;
};

} // namespace hhmm

#endif
