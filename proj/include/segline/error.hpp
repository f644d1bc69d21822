#pragma once

#include <stdexcept>
#include <string>

namespace segline {

// Base for every error the library raises. The CLI maps ConfigError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration or arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Vector/matrix dimensions or sentence counts do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A non-finite value showed up during loss or gradient evaluation.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Malformed input files (JSON, JSONL, checkpoints).
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace segline
