#ifndef CROSSGAP_ERRORS_HPP
#define CROSSGAP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace crossgap {

// Process exit codes, stable for scripting.
enum ExitCode {
    kExitOk = 0,
    kExitUsage = 2,
    kExitData = 3,
    kExitRuntime = 4,
};

// Malformed or inconsistent input data: bad file headers, dimension
// mismatches, degenerate training material.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Environment failures: I/O errors, socket errors, resource exhaustion.
class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace crossgap

#endif
