#pragma once

#include <stdexcept>
#include <string>

namespace absaforge {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset files: missing, malformed, unknown labels.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Caller violated an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace absaforge
