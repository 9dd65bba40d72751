#pragma once

#include <stdexcept>
#include <string>

namespace empdyn {

// Bad user input: missing files, unparsable rows, invalid options.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure of an estimation step: degenerate input, singular fit.
class estimation_error : public std::runtime_error {
 public:
  explicit estimation_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace empdyn
