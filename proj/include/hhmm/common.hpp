#ifndef HHMM_COMMON_HPP
#define HHMM_COMMON_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace hhmm {

// Error categories map onto CLI exit codes (usage=2, data=3, numeric=4).
enum class ErrorCategory { usage = 2, data = 3, numeric = 4 };

// All library errors carry a category plus a message that starts with a
// stable slug ("invalid-parameter:", "likelihood-underflow:", ...) so
// callers and tests can dispatch without string-matching prose.
class Error : public std::runtime_error {
public:
  Error(ErrorCategory cat, const std::string &msg)
      : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }
  int exit_code() const { return static_cast<int>(cat_); }

private:
  ErrorCategory cat_;
};

// Missing observations are NaN; everything downstream treats a missing
// value as contributing likelihood 1.
inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double y) { return std::isnan(y); }

// Optional sink for non-fatal diagnostics (clamped probabilities etc.).
using Warnings = std::vector<std::string>;

inline void warn(Warnings *sink, const std::string &msg) {
  if (sink) sink->push_back(msg);
}

} // namespace hhmm

#endif
