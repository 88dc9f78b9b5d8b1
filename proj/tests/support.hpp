#pragma once

#include <string>

#include "rulgp/errors.hpp"

namespace rulgp::test {

/// Kind of the rulgp::Error thrown by `fn`, or "" when nothing is thrown.
template <class Fn>
std::string error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return "";
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace rulgp::test
