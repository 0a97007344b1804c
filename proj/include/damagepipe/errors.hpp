#pragma once

#include <stdexcept>
#include <string>

namespace damagepipe {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed textual input (WKT, model responses, JSON payloads).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Degenerate or out-of-bounds geometry.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Unknown xBD damage subtype.
class MappingError : public Error {
 public:
  using Error::Error;
};

/// Label file or image could not be read or decoded.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Transport failed after all retries were spent.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

/// Backend answered with a non-2xx status or a malformed body.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, const std::string& message)
      : Error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Backend answer violates a gateway-enforced contract (dims, length limits).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace damagepipe
