#include "semuq/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace semuq {

namespace {

std::atomic<LogLevel> g_level{ LogLevel::warning };
std::mutex g_mutex;

const char* prefix(LogLevel level)
{
  switch (level) {
    case LogLevel::warning:
      return "warning: ";
    case LogLevel::info:
      return "info: ";
    case LogLevel::debug:
      return "debug: ";
    default:
      return "";
  }
}

} // namespace

void set_log_level(LogLevel level)
{
  g_level.store(level);
}

LogLevel log_level()
{
  return g_level.load();
}

void log_message(LogLevel level, const std::string& text)
{
  if (level == LogLevel::quiet || level > g_level.load())
    return;
  std::lock_guard lock(g_mutex);
  std::cerr << prefix(level) << text << '\n';
}

} // namespace semuq
