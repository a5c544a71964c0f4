#pragma once

#include <stdexcept>
#include <string>

namespace vera {

/// Base class of every error raised by the library. `kind()` is a stable
/// machine-parsable tag used by the CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error("dimension-mismatch", what) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error("invalid-argument", what) {}
};

struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& what) : Error("invalid-config", what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct CorruptionError : Error {
  explicit CorruptionError(const std::string& what) : Error("corruption", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

struct UnsupportedMethod : Error {
  explicit UnsupportedMethod(const std::string& what) : Error("unsupported-method", what) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

}  // namespace vera
