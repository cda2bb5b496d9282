#pragma once

#include <stdexcept>
#include <string>

namespace gridqcd {

/// Failure categories. The CLI maps each to a distinct exit status.
enum class ErrorKind {
    Input,       // malformed files, unknown elements, dimension mismatch
    Structural,  // disconnected/islanded network
    Numeric,     // singular systems, nonconvergence, degenerate regions
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

/// Requested value outside the tabulated range (validation failure).
class RangeError : public InputError {
public:
    explicit RangeError(const std::string& what) : InputError(what) {}
};

class StructuralError : public Error {
public:
    explicit StructuralError(const std::string& what) : Error(ErrorKind::Structural, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace gridqcd
