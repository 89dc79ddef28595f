#pragma once

#include <stdexcept>
#include <string>

namespace petra {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary or text input (bad magic, unsupported version).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Two sources disagree (payload vs manifest, truncated data).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace petra
