#pragma once

#include <stdexcept>
#include <string>

namespace hardmine {

// Invalid or inconsistent configuration values / missing keys.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file; message carries the record location.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// File format version not understood by this build.
class VersionError : public ParseError {
 public:
  explicit VersionError(const std::string& what) : ParseError(what) {}
};

// Training hit a non-finite loss or gradient; carries a diagnostic dump.
class TrainAbort : public std::runtime_error {
 public:
  explicit TrainAbort(const std::string& what) : std::runtime_error(what) {}
};

// Mini-batch sampling has nothing to draw from.
class SamplingError : public std::runtime_error {
 public:
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hardmine
