#pragma once

#include <stdexcept>
#include <string>

namespace dropcast {

// Fatal condition raised by any stage. Recoverable per-row problems are
// collected as values instead (see RowError).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dropcast
