#pragma once

#include <stdexcept>
#include <string>

namespace randconv {

// Bad input data (unreadable file, degenerate corpus, ...). Parameter
// violations are reported as std::invalid_argument instead.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or parameter.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace randconv
