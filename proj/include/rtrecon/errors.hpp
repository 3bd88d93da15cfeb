#pragma once

#include <stdexcept>
#include <string>

namespace rtrecon {

// Exit-code mapping: UsageError -> 1, IoError -> 2, ValidationError -> 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rtrecon
