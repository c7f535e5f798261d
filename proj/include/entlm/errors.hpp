#pragma once

#include <stdexcept>
#include <string>

namespace entlm {

// Base for every error raised by the library. Subclasses map onto the CLI
// exit codes in tools/entlm.cpp.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A softmax row with no unmasked entry; always a malformed causal mask.
class InvalidMaskError : public Error {
 public:
  using Error::Error;
};

class EmptyLossError : public Error {
 public:
  using Error::Error;
};

class VocabError : public Error {
 public:
  using Error::Error;
};

class DoubleBackwardError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Corpus validation failures. Each names the offending dialogue id.
class MalformedRecordError : public DataError {
 public:
  using DataError::DataError;
};

class SpanOutOfBoundsError : public DataError {
 public:
  using DataError::DataError;
};

class OverlappingSpansError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace entlm
