#pragma once

#include <string_view>

#include <json.hpp>

namespace patchlab::cli {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

LogLevel parse_log_level(std::string_view text);
void set_log_level(LogLevel level);

/// One JSON object per line on stderr: {"level", "event", ...fields}.
void log(LogLevel level, std::string_view event, nlohmann::json fields = nlohmann::json::object());

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv, runs one subcommand, and returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace patchlab::cli
