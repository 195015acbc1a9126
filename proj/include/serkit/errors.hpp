#pragma once

#include <stdexcept>
#include <string>

namespace ser {

// Every failure the library raises derives from Error so callers can catch
// one type at the boundary. The subtype encodes what went wrong, not where;
// the message carries the details (offending file, key, shape, ...).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File missing or unreadable, write failed, directory not creatable.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input bytes do not parse as the expected container (wav, csv, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Parses fine but uses a feature we deliberately do not handle
// (e.g. a 24-bit wav or a 5-channel recording).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Stored checksum does not match the bytes on disk.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Container version newer than this build understands.
class VersionError : public Error {
 public:
  using Error::Error;
};

// Bad key, bad value, or inconsistent combination in a run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A class label outside the fixed three-class set.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Tensor arguments whose shapes cannot be combined by the requested op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared in a computation that must stay finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Any other argument that violates a documented precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace ser
