#pragma once

#include <stdexcept>
#include <string>

namespace gopa {

// Invalid configuration or argument (CLI exit code 2).
struct parameter_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Protocol-level misuse: edge not in graph, missing publication, key mismatch.
struct protocol_error : std::logic_error {
  using std::logic_error::logic_error;
};

// Fixed-point value does not fit the plaintext half-range.
struct range_error : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Solver failure or undefined quantity (CLI exit code 3).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Key generation or ciphertext validity failure.
struct crypto_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gopa
