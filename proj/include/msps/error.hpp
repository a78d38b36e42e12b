#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace msps {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when tensor extents do not match what an operation expects.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& what, std::vector<std::size_t> expected,
             std::vector<std::size_t> actual);

  const std::vector<std::size_t>& expected() const noexcept { return expected_; }
  const std::vector<std::size_t>& actual() const noexcept { return actual_; }

 private:
  std::vector<std::size_t> expected_;
  std::vector<std::size_t> actual_;
};

/// Raised when an operation produces NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Raised for malformed or inconsistent files.
class FormatError : public Error {
 public:
  using Error::Error;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace msps
