#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace absaforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
/// Run finished with fewer samples than requested.
inline constexpr int kExitPartial = 2;
/// `replay` produced different bytes.
inline constexpr int kExitMismatch = 3;
inline constexpr int kExitUsage = 64;

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Runs one invocation. `args` excludes the program name. Values come from
/// flags first, then the `--config` file, then the environment.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env);

}  // namespace absaforge::cli
