#pragma once

#include <stdexcept>
#include <string>

namespace greenview {

// Base class for all library errors. Subclasses distinguish the failure
// domain so callers can react differently (retry transport errors, abort
// on validation errors, ...).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input document (XML, JSON, config).
class ParseError : public Error {
public:
    using Error::Error;
};

// Input violates a documented invariant or precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Corrupt or unsupported image stream.
class CodecError : public Error {
public:
    using Error::Error;
};

// Network-level failure; retryable, distinct from "resource not found".
class TransportError : public Error {
public:
    using Error::Error;
};

// Operation called in the wrong order (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

// Filesystem failure (missing file, unwritable path).
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite value produced by a numeric kernel.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace greenview
