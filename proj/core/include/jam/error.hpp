#pragma once

#include <stdexcept>
#include <string>

namespace jam {

// Error categories. Every failure surfaced by the library derives from Error;
// the category decides the CLI exit status and the HTTP status code.
enum class ErrorKind {
  Usage,       // bad flags, bad config values
  Contract,    // violated precondition (dimension mismatch, k out of range)
  Format,      // malformed file header or payload
  Alignment,   // ids file does not match a matrix
  Data,        // non-finite values, unresolvable ids, bad provider payload
  Config,      // inconsistent model configuration
  NotFound,    // unknown user/query/item id
  Provider,    // external embedding provider unreachable or failed
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const char* what) {
  if (!condition) fail(ErrorKind::Contract, what);
}

}  // namespace jam
