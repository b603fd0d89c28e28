#pragma once

#include <stdexcept>
#include <string>

namespace upl {

// Error taxonomy shared by all modules. The CLI maps kinds to exit codes
// (config -> 2, empty_result -> 3, everything else -> 1).
enum class ErrorKind {
    config,      // bad configuration, flags, or template
    input,       // malformed or inconsistent input data
    lookup,      // unknown key (class name, report name, ...)
    corruption,  // stored payload fails its integrity check
    empty_result // an operation legitimately produced nothing usable
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::config, msg); }
[[noreturn]] inline void throw_input(const std::string& msg) { throw Error(ErrorKind::input, msg); }
[[noreturn]] inline void throw_lookup(const std::string& msg) { throw Error(ErrorKind::lookup, msg); }
[[noreturn]] inline void throw_corruption(const std::string& msg) { throw Error(ErrorKind::corruption, msg); }
[[noreturn]] inline void throw_empty(const std::string& msg) { throw Error(ErrorKind::empty_result, msg); }

} // namespace upl
