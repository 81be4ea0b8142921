#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace agentdel {

// Stable machine-readable error codes. The string form of each code is part
// of the wire contract (HTTP error bodies, Decision reason codes).
enum class Errc {
  // token verification
  BadSignature,
  Expired,
  NotYetValid,
  MalformedEnvelope,
  KindMismatch,
  KeyMismatch,
  DanglingRef,
  ChainCycle,
  DepthExceeded,
  EncodingError,
  ValidationError,
  // policy / usage
  BudgetExceeded,
  RateExceeded,
  OutsideTimeWindow,
  SchemaViolation,
  CurrencyMismatch,
  EmptyChain,
  // CNL compiler
  ParseError,
  UnknownKeyword,
  DanglingConstraint,
  EmptyInput,
  UnresolvedLabels,
  // provider
  InvalidOwnerToken,
  DuplicateLocalId,
  AuthnFailed,
  BadClientSecret,
  UnknownReferencedToken,
  CallerUnauthenticated,
  UnknownToken,
  NotOwner,
  UnknownPeer,
  PeerKeyFetchFailed,
  Revoked,
  // verifier
  RobotsDisallowed,
  ApprovalTimeout,
  StorageFailure,
};

const char* errc_name(Errc c);

struct Error {
  Errc code;
  std::string message;

  Error(Errc c, std::string msg = {}) : code(c), message(std::move(msg)) {}

  std::string describe() const {
    std::string s = errc_name(code);
    if (!message.empty()) {
      s += ": ";
      s += message;
    }
    return s;
  }
};

// Minimal expected-style result. value() throws on error access misuse;
// callers are expected to branch on ok() first.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Error err) : v_(std::move(err)) {}
  Result(Errc code, std::string msg = {}) : v_(Error(code, std::move(msg))) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() {
    if (!ok()) throw std::runtime_error("Result::value on error: " + error().describe());
    return std::get<T>(v_);
  }
  const T& value() const {
    if (!ok()) throw std::runtime_error("Result::value on error: " + error().describe());
    return std::get<T>(v_);
  }
  const Error& error() const { return std::get<Error>(v_); }

 private:
  std::variant<T, Error> v_;
};

struct Unit {};
using Status = Result<Unit>;

inline Status ok_status() { return Status(Unit{}); }

}  // namespace agentdel
