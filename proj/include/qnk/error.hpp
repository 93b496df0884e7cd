#pragma once

#include <stdexcept>
#include <string>

namespace qnk {

// Values mirror the QNK_E_* codes of the C API.
enum class Errc {
  invalid_argument = 1,
  domain = 2,
  config = 3,
  numerical = 4,
  resolution = 5,
  io = 6,
  s_stability = 7,
  table_range = 8,
  solvability = 9,
  quadrature = 10,
  extrapolation = 11,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace qnk
