#ifndef HHMM_CLI_HPP
#define HHMM_CLI_HPP

namespace hhmm {

// Entry point of the hhmm tool. Returns the process exit code: 0 success,
// 2 usage, 3 data validation, 4 numerical failure.
int run_cli(int argc, const char *const *argv);

} // namespace hhmm

#endif
