#include "crossgap/log.hpp"

#include <atomic>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace crossgap {
namespace log {

namespace {

Level parse_env() {
    const char* v = std::getenv("CROSSGAP_LOG");
    if (v == nullptr) return Level::kWarn;
    if (std::strcmp(v, "error") == 0) return Level::kError;
    if (std::strcmp(v, "warn") == 0) return Level::kWarn;
    if (std::strcmp(v, "info") == 0) return Level::kInfo;
    if (std::strcmp(v, "debug") == 0) return Level::kDebug;
    return Level::kWarn;
}

std::atomic<int>& threshold_slot() {
    static std::atomic<int> slot{static_cast<int>(parse_env())};
    return slot;
}

void vlog(Level level, const char* tag, const char* fmt, va_list ap) {
    if (static_cast<int>(level) > threshold_slot().load(std::memory_order_relaxed)) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::fprintf(stderr, "[%s] ", tag);
    std::vfprintf(stderr, fmt, ap);
    std::fputc('\n', stderr);
}

}  // namespace

Level threshold() { return static_cast<Level>(threshold_slot().load(std::memory_order_relaxed)); }

void set_threshold(Level level) { threshold_slot().store(static_cast<int>(level), std::memory_order_relaxed); }

#define CROSSGAP_LOG_BODY(level, tag)        \
    va_list ap;                              \
    va_start(ap, fmt);                       \
    vlog(level, tag, fmt, ap);               \
    va_end(ap)

void error(const char* fmt, ...) { CROSSGAP_LOG_BODY(Level::kError, "error"); }
void warn(const char* fmt, ...) { CROSSGAP_LOG_BODY(Level::kWarn, "warn"); }
void info(const char* fmt, ...) { CROSSGAP_LOG_BODY(Level::kInfo, "info"); }
void debug(const char* fmt, ...) { CROSSGAP_LOG_BODY(Level::kDebug, "debug"); }

#undef CROSSGAP_LOG_BODY

}  // namespace log
}  // namespace crossgap
