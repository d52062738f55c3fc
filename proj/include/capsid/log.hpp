#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace capsid::logging {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

// Verbosity comes from CAPSID_LOG in {error, info, debug}; default info.
inline Level level() {
  static Level lvl = [] {
    const char* env = std::getenv("CAPSID_LOG");
    if (env == nullptr) return Level::kInfo;
    if (std::strcmp(env, "error") == 0) return Level::kError;
    if (std::strcmp(env, "debug") == 0) return Level::kDebug;
    return Level::kInfo;
  }();
  return lvl;
}

inline void write(Level lvl, const char* tag, const std::string& msg) {
  if (lvl > level()) return;
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

inline void error(const std::string& msg) { write(Level::kError, "error", msg); }
inline void info(const std::string& msg) { write(Level::kInfo, "info", msg); }
inline void debug(const std::string& msg) { write(Level::kDebug, "debug", msg); }

}  // namespace capsid::logging
