// cli.hpp

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace splat4d {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Entry point for `splat4d synth|train|render|eval`. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace splat4d
