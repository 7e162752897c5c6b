#pragma once

#include <stdexcept>
#include <string>

namespace lesion {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid ModelConfig or experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed, truncated or corrupted NLF1 file.
class FormatError : public Error {
public:
    using Error::Error;
};

// Bad user input (empty text, too-short sequence, missing file).
class InputError : public Error {
public:
    using Error::Error;
};

class LengthError : public InputError {
public:
    using InputError::InputError;
};

// Neuron/site id outside the model's address space, or a ranking built for another model.
class AddressingError : public Error {
public:
    using Error::Error;
};

// Request exceeds a tractability guard (exhaustive search).
class BudgetError : public Error {
public:
    using Error::Error;
};

}  // namespace lesion
