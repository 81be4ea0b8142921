#pragma once

#include <memory>
#include <string>

#include "agentdel/provider.hpp"

namespace agentdel::provider {

// HTTP JSON surface over a Provider. Paths are fixed:
//   POST /register /token/user /token/agent /delegation /introspect /revoke
//   GET  /keys /health
// Errors are {code, message} bodies with stable codes.
class ProviderServer {
 public:
  explicit ProviderServer(std::shared_ptr<Provider> provider);
  ~ProviderServer();
  ProviderServer(const ProviderServer&) = delete;
  ProviderServer& operator=(const ProviderServer&) = delete;

  // port 0 binds an ephemeral port; returns the bound port
  Result<int> start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  void wait();  // block until stop() is called from another thread
  int port() const;
  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace agentdel::provider
