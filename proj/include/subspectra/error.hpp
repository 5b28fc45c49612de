#pragma once

#include <stdexcept>
#include <string>

namespace subspectra {

/// Base of every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Caller-supplied arguments violate an operation's preconditions.
class ValidationError : public Error
{
public:
    using Error::Error;
};

/// Filesystem failure (open, read, write, rename).
class IoError : public Error
{
public:
    using Error::Error;
};

/// A file was readable but its bytes do not follow the expected layout.
class FormatError : public IoError
{
public:
    using IoError::IoError;
};

/// Input is numerically degenerate for the requested computation
/// (all-zero matrix, diverged training, inconsistent dual computation).
class NumericalError : public Error
{
public:
    using Error::Error;
};

namespace detail {

template <typename E = ValidationError>
inline void require(bool cond, const std::string & what)
{
    if (!cond)
        throw E(what);
}

} // namespace detail
} // namespace subspectra
