#pragma once

#include <stdexcept>
#include <string>

namespace mhflow {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace mhflow
