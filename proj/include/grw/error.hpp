#pragma once

#include <stdexcept>
#include <string>

namespace grw {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension disagreement between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Input violates a precondition (non-finite values, bad counts, ...).
struct InvalidInputError : Error {
    using Error::Error;
};

// Operation called in a state it cannot serve (empty buffer, unpopulated tape, ...).
struct StateError : Error {
    using Error::Error;
};

struct InsufficientClassesError : Error {
    using Error::Error;
};

struct InvalidLabelError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

// Non-finite value detected during training.
struct NumericError : Error {
    using Error::Error;
};

} // namespace grw
