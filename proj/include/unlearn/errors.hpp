#pragma once

#include <stdexcept>
#include <string>

namespace unlearn {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad arguments, malformed files, out-of-range values. Maps to CLI exit code 2.
struct InputError : Error {
    explicit InputError(const std::string& what) : Error(what) {}
};

// Two module-gradient containers (or two vectors) that should agree in shape do not.
struct AlignmentError : InputError {
    explicit AlignmentError(const std::string& what) : InputError(what) {}
};

// Malformed file content; carries the offending line when known.
struct ParseError : InputError {
    ParseError(const std::string& file, long line, const std::string& what)
        : InputError(file + ":" + std::to_string(line) + ": " + what),
          file_name(file),
          line_number(line) {}
    std::string file_name;
    long line_number;
};

// A runtime self-check failed. Maps to CLI exit code 1.
struct InvariantViolation : Error {
    explicit InvariantViolation(const std::string& what) : Error(what) {}
};

}  // namespace unlearn
