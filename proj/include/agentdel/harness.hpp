#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "agentdel/crypto.hpp"
#include "agentdel/error.hpp"
#include "agentdel/policy.hpp"
#include "agentdel/provider.hpp"
#include "agentdel/provider_http.hpp"
#include "agentdel/tokens.hpp"
#include "agentdel/verifier.hpp"
#include "json.hpp"

namespace agentdel::harness {

struct Report {
  std::string name;
  bool pass = true;
  std::vector<std::string> transcript;
};

// Interprets declarative scenario scripts (scenarios/*.json): spawns
// providers over loopback HTTP, issues tokens, delegates, fires access
// requests and checks expectations. Runs on an injected logical clock so
// expiry behaviour is reproducible.
class ScenarioRunner {
 public:
  ScenarioRunner();
  ~ScenarioRunner();

  Report run(const nlohmann::json& script);
  Report run_file(const std::string& path);

 private:
  struct ProviderInstance {
    std::shared_ptr<provider::Provider> provider;
    std::unique_ptr<provider::ProviderServer> server;
    std::string host;
  };
  struct RegistrationHandle {
    std::string provider_id;
    std::string local_id;
    std::string client_secret;
  };

  Status step(const nlohmann::json& s, Report& report);
  crypto::KeyPair next_keypair();
  Result<tokens::TokenEnvelope> token(const std::string& handle) const;
  Result<crypto::KeyPair> key(const std::string& handle) const;
  Result<policy::Policy> policy_handle(const std::string& handle) const;

  std::shared_ptr<std::atomic<std::int64_t>> clock_;
  std::uint64_t key_counter_ = 0;
  std::string seed_prefix_;

  std::map<std::string, ProviderInstance> providers_;
  std::map<std::string, crypto::KeyPair> keys_;
  std::map<std::string, tokens::TokenEnvelope> tokens_;
  std::map<std::string, policy::Policy> policies_;
  std::map<std::string, RegistrationHandle> registrations_;
  std::map<std::string, std::shared_ptr<verifier::Verifier>> verifiers_;
};

}  // namespace agentdel::harness
