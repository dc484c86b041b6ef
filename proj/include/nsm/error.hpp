#pragma once

#include <stdexcept>
#include <string>

namespace nsm {

// Validation errors come from malformed input (files, graphs, arguments);
// runtime errors come from states reached while executing valid input.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nsm
