#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tmeasures {

// Every failure carries a short machine-readable code ("format-error",
// "truncated-file", ...) in addition to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  explicit Error(std::string code) : std::runtime_error(code), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace tmeasures
