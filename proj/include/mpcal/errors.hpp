#pragma once

#include <stdexcept>
#include <string>

namespace mpcal {

// Malformed or invariant-violating input data. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration. Maps to CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything raised by an inference backend. Maps to CLI exit code 3.
class BackendError : public std::runtime_error {
 public:
  enum class Kind {
    kTransport,  // retryable: connection failure, 429, 5xx
    kDecode,     // backend answered but the body is not what the protocol says
    kSemantic,   // backend rejected the request (4xx other than 429)
    kExhausted,  // retry budget spent on transport failures
  };

  BackendError(Kind kind, const std::string& what, int attempts = 1,
               std::string raw_body = {})
      : std::runtime_error(what),
        kind_(kind),
        attempts_(attempts),
        raw_body_(std::move(raw_body)) {}

  Kind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  const std::string& raw_body() const { return raw_body_; }
  bool retryable() const { return kind_ == Kind::kTransport; }

 private:
  Kind kind_;
  int attempts_;
  std::string raw_body_;
};

}  // namespace mpcal
