#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace crowdcalib {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition or invariant violation on in-memory data.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed external input. `location` is a byte offset, a 1-based line or
/// row number, depending on the format; `what()` already includes it.
class FormatError : public Error {
public:
    FormatError(const std::string& message, std::size_t location)
        : Error(message), location_(location) {}
    explicit FormatError(const std::string& message) : Error(message) {}

    std::size_t location() const noexcept { return location_; }

private:
    std::size_t location_ = 0;
};

/// Raised on non-finite inputs or failed solves when strictness is requested.
class NumericalError : public Error {
public:
    using Error::Error;
};

using WarningSink = std::function<void(const std::string&)>;

/// Routes a warning to the installed sink (stderr by default).
void warn(const std::string& message);

/// Installs a sink and returns the previous one. Passing an empty function
/// restores the stderr default.
WarningSink set_warning_sink(WarningSink sink);

} // namespace crowdcalib
