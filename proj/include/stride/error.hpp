#pragma once

#include <stdexcept>
#include <string>

namespace stride {

// Base for every failure surfaced by the library. Messages are meant to be
// shown to the user as-is.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace stride
