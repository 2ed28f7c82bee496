#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stepwise {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownLevelError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed input line; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& reason)
        : Error("line " + std::to_string(line) + ": " + reason), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class BudgetExceededError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class AlreadyNormalizedError : public Error {
public:
    using Error::Error;
};

class EmptyMatrixError : public Error {
public:
    using Error::Error;
};

class InfeasiblePathError : public Error {
public:
    using Error::Error;
};

class InvalidPairError : public Error {
public:
    using Error::Error;
};

class InvalidPathError : public Error {
public:
    using Error::Error;
};

class MissingPlanError : public Error {
public:
    using Error::Error;
};

class NoFallbackError : public Error {
public:
    using Error::Error;
};

class MissingDescriptorError : public Error {
public:
    using Error::Error;
};

class EmptyResponseError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

}  // namespace stepwise
