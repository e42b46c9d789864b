#pragma once

#include <string>

namespace semuq {

enum class LogLevel
{
  quiet,
  warning,
  info,
  debug
};

/// Process-wide verbosity; defaults to warning.
void set_log_level(LogLevel level);
LogLevel log_level();

/// Thread-safe line logging to standard error.
void log_message(LogLevel level, const std::string& text);

inline void log_warning(const std::string& text)
{
  log_message(LogLevel::warning, text);
}

inline void log_info(const std::string& text)
{
  log_message(LogLevel::info, text);
}

} // namespace semuq
