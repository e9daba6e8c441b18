#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace splatam {

enum class LogLevel : int { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// Level comes from the SPLATAM_LOG environment variable
/// (error|warn|info|debug). Unset or unrecognized means warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SPLATAM_LOG");
    if (!env) return LogLevel::kWarn;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "warn") == 0) return LogLevel::kWarn;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

namespace detail {

inline void log_line(LogLevel lvl, const char* tag, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

}  // namespace detail

inline void log_error(const std::string& msg) { detail::log_line(LogLevel::kError, "error", msg); }
inline void log_warn(const std::string& msg) { detail::log_line(LogLevel::kWarn, "warn", msg); }
inline void log_info(const std::string& msg) { detail::log_line(LogLevel::kInfo, "info", msg); }
inline void log_debug(const std::string& msg) { detail::log_line(LogLevel::kDebug, "debug", msg); }

}  // namespace splatam
