#pragma once

#include <stdexcept>
#include <string>

namespace gcfa {

// Malformed input: bad files, invalid arguments, violated preconditions.
class input_error : public std::invalid_argument {
 public:
  explicit input_error(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical routine failed on otherwise valid input.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gcfa
