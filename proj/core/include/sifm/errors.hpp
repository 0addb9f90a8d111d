#pragma once

#include <stdexcept>
#include <string>

namespace sifm {

// Base for everything thrown on purpose by this library. The CLI maps each
// subclass to a distinct process exit code; see tools/.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value or unknown config key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape/rank mismatch between tensors or grids.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (bad magic, truncation, bad field). Messages carry the
// byte offset where parsing failed whenever that is meaningful.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Checkpoint file exists and parses, but doesn't match the requested model
// (missing tensor, wrong shape, config mismatch).
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Numeric argument outside its documented range (index, length, axis).
class RangeError : public Error {
 public:
  using Error::Error;
};

// Input data violates a mathematical precondition (e.g. constant truth field
// in a variance-normalized score, fully masked attention row).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Internal invariant broken: a bug in this library, not in caller input.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace sifm
