#pragma once

#include <string>
#include <vector>

namespace cagsr::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// Runs one command line (without the program name), e.g.
//   {"train-cagsr", "--config", "run.json", "--out", "runs/a"}.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace cagsr::cli
