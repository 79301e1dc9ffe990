#pragma once

#include <stdexcept>
#include <string>

namespace dfir {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Out-of-range configuration or argument; raised before any work starts.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Corrupted or truncated persisted artifact.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// An upstream pipeline artifact is absent; the message names the stage to run.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfir
