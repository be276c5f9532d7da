#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uwe {

enum class Errc {
  empty_input,
  parameter,
  shape_mismatch,
  out_of_range,
  unsupported_format,
  truncated,
  dimension_overflow,
  io,
  non_finite,
  single_class,
  divergence,
  config,
};

std::string_view to_string(Errc code) noexcept;

// Every failure in the toolkit surfaces as this exception; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace uwe
