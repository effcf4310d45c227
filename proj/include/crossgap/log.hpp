#ifndef CROSSGAP_LOG_HPP
#define CROSSGAP_LOG_HPP

namespace crossgap {
namespace log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Threshold comes from the CROSSGAP_LOG environment variable
// (error|warn|info|debug); default is warn.
Level threshold();
void set_threshold(Level level);

void error(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void warn(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void info(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void debug(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

}  // namespace log
}  // namespace crossgap

#endif
