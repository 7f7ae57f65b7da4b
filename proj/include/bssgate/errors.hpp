#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bssgate {

// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition (empty input, bad shape...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A configuration value failed validation. `field()` names the offending key.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// WAV or other file content could not be decoded. `field()` names the header
// field (or section) that was wrong.
class DecodeError : public Error {
 public:
  DecodeError(std::string field, const std::string& what);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Iterative numerics produced a non-finite or singular result.
class NumericalError : public Error {
 public:
  static constexpr std::size_t kNoBin = static_cast<std::size_t>(-1);
  NumericalError(const std::string& what, std::size_t bin = kNoBin);
  std::size_t bin() const noexcept { return bin_; }

 private:
  std::size_t bin_;
};

}  // namespace bssgate
