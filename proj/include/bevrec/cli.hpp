#pragma once

#include <iosfwd>

namespace bevrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point of the `bevrec` tool. Subcommands: build-db, train-codebook,
/// train-metric, query, eval, sweep. Returns 0 on success, 1 on a usage
/// error, 2 on a data or format error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace bevrec::cli
