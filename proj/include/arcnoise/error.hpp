#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace arcnoise {

/// Exception carrying a module-specific error code. Every module defines its
/// own `enum class` of error kinds and a `to_string` overload for it.
template <typename Code>
class Error : public std::runtime_error {
 public:
  Error(Code code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  [[nodiscard]] Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace arcnoise
