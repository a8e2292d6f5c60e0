#pragma once

#include <stdexcept>
#include <string>

namespace lesionbench {

// Base of every validation failure raised by the toolkit. The CLI maps these
// to exit code 2; IoError maps to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class UniquenessError : public Error {
 public:
  explicit UniquenessError(const std::string& key)
      : Error("duplicate image_name '" + key + "'"), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lesionbench
