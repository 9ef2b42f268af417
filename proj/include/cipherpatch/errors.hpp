#pragma once

#include <stdexcept>
#include <string>

namespace cipherpatch {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched sizes, lengths or indices (permutation length, row count,
// label range, zero-sized permutation).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Block size does not divide the image dimensions.
class BlockSizeError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file contents; message carries the byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration (e.g. encryption block size vs. patch size).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite value encountered during numeric evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failures (open/read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cipherpatch
