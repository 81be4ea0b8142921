#pragma once

#include <memory>
#include <string>

#include "agentdel/verifier.hpp"

namespace agentdel::verifier {

// Thin demo shim: POST /authorize with {bundle: [wire tokens], request: {...},
// now: epoch seconds} answering the Decision JSON.
class VerifierServer {
 public:
  explicit VerifierServer(std::shared_ptr<Verifier> verifier);
  ~VerifierServer();
  VerifierServer(const VerifierServer&) = delete;
  VerifierServer& operator=(const VerifierServer&) = delete;

  Result<int> start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const;
  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace agentdel::verifier
