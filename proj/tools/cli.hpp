#pragma once

// `gandyn` subcommands as a library so tests can drive them in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace gandyn::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,       // bad flags, unreadable or invalid config, refused output dir
  kDiverged = 3,    // a run diverged; partial artifacts are kept
  kNumerical = 4,   // internal numerical failure, or a failed gradient check
};

/// Runs `gandyn <args...>`; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// SHA-256 of `text` as lowercase hex.
std::string sha256_hex(const std::string& text);

}  // namespace gandyn::cli
