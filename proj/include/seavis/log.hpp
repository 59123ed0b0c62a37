#pragma once

// Tiny stderr logger controlled by SEAVIS_LOG={error,info,debug}.
// Everything goes to stderr so output artifacts stay byte-deterministic.

#include <cstdlib>
#include <iostream>
#include <string>

namespace seavis::log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("SEAVIS_LOG");
    if (env == nullptr) return Level::kError;
    const std::string v(env);
    if (v == "debug") return Level::kDebug;
    if (v == "info") return Level::kInfo;
    return Level::kError;
  }();
  return level;
}

inline void emit(Level level, const std::string& msg) {
  if (level > threshold()) return;
  const char* tag = level == Level::kError  ? "error"
                    : level == Level::kInfo ? "info"
                                            : "debug";
  std::cerr << "[seavis][" << tag << "] " << msg << '\n';
}

inline void error(const std::string& msg) { emit(Level::kError, msg); }
inline void info(const std::string& msg) { emit(Level::kInfo, msg); }
inline void debug(const std::string& msg) { emit(Level::kDebug, msg); }

}  // namespace seavis::log
