#pragma once

#include <stdexcept>
#include <string>

namespace formeq {

/// Malformed or out-of-contract input (bad file, wrong dimensions, empty data).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace formeq
