#include "hhmm/series.hpp"

namespace hhmm {

void SegmentedSeries::validate() const {
  if (segments.empty())
    throw Error(ErrorCategory::data, "validation: no segments in series");
  for (std::size_t m = 0; m < segments.size(); ++m) {
    if (segments[m].length() < 1)
      throw Error(ErrorCategory::data, "validation: segment " +
                                           std::to_string(m + 1) + " is empty");
    if (segments[m].n_vars != segments[0].n_vars)
      throw Error(ErrorCategory::data,
                  "validation: segments disagree on variable count");
  }
  if (!variable_names.empty() &&
      static_cast<int>(variable_names.size()) != segments[0].n_vars)
    throw Error(ErrorCategory::data,
                "validation: variable names do not match data columns");
  if (!group_of_segment.empty()) {
    if (group_of_segment.size() != segments.size())
      throw Error(ErrorCategory::data,
                  "validation: group markers do not match segment count");
    for (std::size_t m = 1; m < group_of_segment.size(); ++m) {
      bool seen_before = false;
      for (std::size_t j = 0; j < m; ++j)
        if (group_of_segment[j] == group_of_segment[m] &&
            group_of_segment[m - 1] != group_of_segment[m])
          seen_before = true;
      if (seen_before)
        throw Error(ErrorCategory::data,
                    "validation: segments of one group must be contiguous");
    }
  }
}

std::vector<std::pair<int, int>> SegmentedSeries::group_ranges() const {
  std::vector<std::pair<int, int>> ranges;
  const int m = m_segments();
  if (m == 0) return ranges;
  if (group_of_segment.empty()) {
    ranges.emplace_back(0, m);
    return ranges;
  }
  int begin = 0;
  for (int i = 1; i <= m; ++i) {
    if (i == m || group_of_segment[i] != group_of_segment[begin]) {
      ranges.emplace_back(begin, i);
      begin = i;
    }
  }
  return ranges;
}

} // namespace hhmm
