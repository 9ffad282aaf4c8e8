#pragma once

#include <stdexcept>
#include <string>

namespace stdb {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or extent mismatch between tensors.
class DimError : public Error {
 public:
  explicit DimError(const std::string& msg) : Error("dimension error: " + msg) {}
};

// A stated precondition was violated (out-of-range value, missing gradient, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

// Configuration file could not be parsed or validated.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Dataset ingestion failed (bad filename, bad image file, wrong size).
class IngestError : public Error {
 public:
  explicit IngestError(const std::string& msg) : Error("ingestion error: " + msg) {}
};

// Checkpoint persistence failed. The kind distinguishes the failure modes.
class PersistError : public Error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, BadCrc, Truncated, BadPayload };

  PersistError(Kind kind, const std::string& msg)
      : Error("persistence error: " + msg), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Generic file I/O failure outside of checkpoints (heatmaps, logs).
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace stdb
