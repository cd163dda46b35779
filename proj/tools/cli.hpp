#pragma once

#include <iosfwd>
#include <string>
#include <vector>

// Command-line front ends. `args[0]` names the program: "scenefuse" takes a
// subcommand (serve | sim | eval | repro), "scenefuse-sim" and
// "scenefuse-eval" behave like `scenefuse sim` and `scenefuse eval`.
//
// Settings resolve as flags > config file > built-in defaults. The config
// file is --config, else $SCENEFUSE_CONFIG.
namespace scenefuse::cli {

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scenefuse::cli
