#pragma once

#include <stdexcept>
#include <string>

namespace cdpa {

// Invalid configuration values (counts, probabilities, layouts).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed external input: CSV cells, payload bytes, config files.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside a mathematical domain (e.g. p <= 0.5 for the budget).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken internal precondition: shape/layout mismatches, non-finite input.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failures, with the offending path in the message.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cdpa
