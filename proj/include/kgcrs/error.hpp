#pragma once

#include <stdexcept>
#include <string>

namespace kgcrs {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the offending line (1-based, 0 if unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace kgcrs
