#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deepsd {

/// Shape or divisibility violation (e.g. coarsening a grid whose dims are
/// not multiples of the factor).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inputs are well-formed but cannot be used (georeference mismatch, empty
/// calendar month, too few rainy days, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk artifact. `kind()` distinguishes the failure class.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kDimensionOverflow, kSyntax };

  ParseError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace deepsd
