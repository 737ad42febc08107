#pragma once

#include <stdexcept>
#include <string>

namespace fewshot {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed files on disk (missing labels.csv, bad manifests, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// On-disk references that do not resolve.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration or API misuse; maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class InfeasibleTaskError : public Error {
 public:
  using Error::Error;
};

}  // namespace fewshot
