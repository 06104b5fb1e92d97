// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace fastgrnn::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kPrecondition = 3, kRuntime = 4 };

/// Bad flags, missing inputs, or an unusable combination of options.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Runs one command line (args[0] is the program name) and returns its exit
/// code. Regular output goes to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a, used to name run directories.
std::uint64_t fnv1a64(const std::string& s);

}  // namespace fastgrnn::cli
