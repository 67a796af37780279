#pragma once

#include <stdexcept>
#include <string>

namespace racer {

// Invalid arguments are reported with std::invalid_argument.

/// A computation produced NaN/Inf.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file does not follow its declared format (bad magic, bad header, bad dimensions).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Payload is shorter or longer than the header declares.
class CorruptionError : public FormatError {
public:
    using FormatError::FormatError;
};

class UnsupportedVersion : public FormatError {
public:
    using FormatError::FormatError;
};

/// A text record could not be parsed. Carries the 1-based line number.
class ParseError : public FormatError {
public:
    ParseError(int line, const std::string& what)
        : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// A model is being applied with a pipeline or frame geometry it was not trained for.
class ConfigMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace racer
