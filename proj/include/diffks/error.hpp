#pragma once

#include <stdexcept>
#include <string>

namespace diffks {

// Bad user input: malformed files, unknown names, invalid options.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: non-convergence, singular systems, degenerate gaps.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Recognized request that this engine deliberately does not support.
class NotImplementedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffks
