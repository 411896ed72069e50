#pragma once

#include <iostream>

namespace cagemap::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit statuses: 0 success, 2 invalid input or configuration, 1 internal error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInvalid = 2;

/// Runs one command line. Artifacts and manifests go to the output directory;
/// progress lines go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace cagemap::cli
