#pragma once

#include <stdexcept>
#include <string>

namespace capsid {

// Every failure surfaces as one of these classes. The CLI prints
// "<code>: <message>" on a single line and exits nonzero, so `code()`
// must stay machine-parsable (lowercase, hyphenated, no spaces).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Malformed input bytes: bad WAV chunk, bad CSV row, bad filename.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error("parse-error", msg) {}
};

// Well-formed container, unsupported contents (e.g. 24-bit PCM).
class UnsupportedFormatError : public Error {
 public:
  explicit UnsupportedFormatError(const std::string& msg)
      : Error("unsupported-format", msg) {}
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config-error", msg) {}
};

// Tensor shape mismatch in an operation.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape-error", msg) {}
};

// API misuse: out-of-range label, backward on a non-scalar, empty input.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error("contract-error", msg) {}
};

// NaN/Inf produced by a forward pass or training step.
class NumericFault : public Error {
 public:
  explicit NumericFault(const std::string& msg) : Error("numeric-fault", msg) {}
};

// Split/protocol violations, e.g. a non-neutral item in a training set.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& msg) : Error("protocol-violation", msg) {}
};

// Degenerate data: zero-RMS clip, too-short signal, all-tied statistics.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("data-error", msg) {}
};

// Filesystem-level trouble reading or writing an artifact.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io-error", msg) {}
};

}  // namespace capsid
