#include "clora/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace clora {

namespace {

LogLevel level_from_env() {
    const char* v = std::getenv("CLORA_LOG");
    if (!v) return LogLevel::error;
    const std::string s(v);
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    return LogLevel::error;
}

std::atomic<int>& level_slot() {
    static std::atomic<int> level{static_cast<int>(level_from_env())};
    return level;
}

std::mutex& stderr_mutex() {
    static std::mutex m;
    return m;
}

void emit(LogLevel at, const char* tag, const std::string& msg) {
    if (static_cast<int>(at) > level_slot().load()) return;
    std::lock_guard lock(stderr_mutex());
    std::cerr << "[clora " << tag << "] " << msg << '\n';
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_slot().load()); }
void set_log_level(LogLevel level) { level_slot().store(static_cast<int>(level)); }

void log_error(const std::string& msg) { emit(LogLevel::error, "error", msg); }
void log_info(const std::string& msg) { emit(LogLevel::info, "info", msg); }
void log_debug(const std::string& msg) { emit(LogLevel::debug, "debug", msg); }

}  // namespace clora
