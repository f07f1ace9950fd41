#pragma once

#include <stdexcept>
#include <string>

namespace fgnn {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An item index outside the vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

// A violated precondition that is the caller's fault.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MalformedInputError : public Error {
 public:
  MalformedInputError(const std::string& what, std::size_t skipped)
      : Error(what), skipped_rows_(skipped) {}
  std::size_t skipped_rows() const { return skipped_rows_; }

 private:
  std::size_t skipped_rows_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

// A session item that is absent from the global graph.
class MissingNodeError : public Error {
 public:
  using Error::Error;
};

// Graph structure that the model cannot process (e.g. a node without
// in-neighbors).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or command-line input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace fgnn
