#pragma once

#include <stdexcept>
#include <string>

namespace dsmt {

// Error hierarchy. The CLI maps each family to a distinct exit code, so
// library code should throw the most specific type that applies.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad field values, inconsistent model construction,
// checkpoint/config compatibility mismatches.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid argument to an operation (empty batch, bad weight range, ...).
class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Tensor shape mismatch between operands.
class ShapeError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

// Problems with input data files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed file contents.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Volume is readable but labels (age/sex) are missing.
class MetadataError : public DataError {
 public:
  using DataError::DataError;
};

// Optimization failure; carries the offending step in the message.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsmt
