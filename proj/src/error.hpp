#pragma once

#include <stdexcept>
#include <string>

namespace guiq {

enum class Errc {
    invalid_arg,
    parse,
    validation,
    io,
    protocol,
    runtime,
};

/// Library-wide exception. The code maps 1:1 onto the C API status values.
class Error : public std::runtime_error {
public:
    Error(Errc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void throw_parse(const std::string& msg) { throw Error(Errc::parse, msg); }
[[noreturn]] inline void throw_validation(const std::string& msg) { throw Error(Errc::validation, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(Errc::io, msg); }

} // namespace guiq
