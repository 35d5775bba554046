#pragma once

#include <stdexcept>
#include <string>

namespace rws {

// Base for every domain failure raised by the library. The CLI maps these to
// exit code 1; anything else escaping main is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

} // namespace rws
