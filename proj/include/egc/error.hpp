#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace egc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or layer shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Class index outside [0, K).
class LabelError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Row-level failure in a CSV input. Rows are counted from 1, header excluded.
class ParseError : public DataError {
 public:
  ParseError(std::size_t row, const std::string& what)
      : DataError("row " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

// Bad magic, version or checksum in a weight archive.
class ArchiveError : public Error {
 public:
  using Error::Error;
};

// Archive is intact but does not match the expected set of tensors.
class SchemaError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace egc
