#pragma once

#include <stdexcept>
#include <string>

namespace sacropipe {

// Error kinds map onto CLI exit codes (see tools/sacropipe.cpp).
enum class ErrorKind {
  config,        // invalid parameters, invalid spec, inconsistent inputs
  upstream,      // an artifact produced by an earlier stage is missing
  numerical,     // NaN loss, degenerate variance, undefined metrics
  io,            // unreadable or unwritable files
  localization,  // SIJ regions could not be derived from a mask
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct UpstreamMissing : Error {
  UpstreamMissing(const std::string& what, const std::string& stage)
      : Error(ErrorKind::upstream, what + " (run `sacropipe " + stage + "` first)") {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct LocalizationError : Error {
  explicit LocalizationError(const std::string& what) : Error(ErrorKind::localization, what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct ProtocolError : Error {
  explicit ProtocolError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::config, what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::upstream: return 3;
    case ErrorKind::numerical: return 4;
    case ErrorKind::localization: return 4;
    case ErrorKind::io: return 3;
  }
  return 1;
}

}  // namespace sacropipe
