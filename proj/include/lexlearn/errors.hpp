#pragma once
// Exception hierarchy shared by every lexlearn module.

#include <stdexcept>
#include <string>

namespace lexlearn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input document (not valid JSON, wrong field types).
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input violating a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class UnknownIdError : public Error {
public:
    using Error::Error;
};

// Operation not allowed in the current session state.
class StateError : public Error {
public:
    using Error::Error;
};

// Should be unreachable given the model's positivity guarantees.
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace lexlearn
