#pragma once

#include <stdexcept>
#include <string>

namespace swnf {

enum class ErrorCode {
  invalid_argument = 1,
  shape_mismatch = 2,
  domain_error = 3,
  non_finite = 4,
  io_error = 5,
  format_error = 6,
  training_aborted = 7,
  autodiff_error = 8,
};

// All failures inside the core surface as swnf::Error; the C API maps the
// code onto swnf_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace swnf
