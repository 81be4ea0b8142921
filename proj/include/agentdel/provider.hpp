#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "agentdel/audit.hpp"
#include "agentdel/crypto.hpp"
#include "agentdel/error.hpp"
#include "agentdel/tokens.hpp"
#include "json.hpp"

namespace agentdel::provider {

using Clock = std::function<std::int64_t()>;

struct FederationPeer {
  std::optional<crypto::PublicKey> pinned_key;
  std::optional<std::string> key_endpoint;  // base URL serving GET /keys
};

struct ProviderConfig {
  std::string issuer_host;
  crypto::KeyPair signing_key;
  std::string key_id;
  std::map<std::string, FederationPeer> federation_peers;  // peer host -> trust
  std::vector<std::uint8_t> pairwise_salt;
  std::int64_t skew = tokens::kDefaultSkewSeconds;
  std::int64_t max_user_token_lifetime = 3600;
  std::int64_t max_agent_token_lifetime = 3600;
  std::int64_t peer_key_cache_ttl = 300;
};

struct Registration {
  std::string local_id;
  std::string client_secret_hash;  // SHA-256 hex; the secret itself is never stored
  std::string owner;               // user GlobalId text
  tokens::AgentIdClaims agent_metadata;
  std::int64_t created_at = 0;
};

struct RegistrationResult {
  std::string local_id;
  std::string client_secret;  // returned exactly once
};

struct IntrospectionResult {
  bool active = false;
  std::string kind;
  std::string subject;
  std::int64_t expires_at = 0;
  bool revoked = false;
  std::vector<std::string> reasons;

  nlohmann::json to_json() const;
  static Result<IntrospectionResult> from_json(const nlohmann::json& j);
};

// Pluggable user authentication; the shipped implementation is a static
// credential table.
class Authenticator {
 public:
  virtual ~Authenticator() = default;
  // assertion is operation-defined JSON; returns the authenticated local user id
  virtual Result<std::string> authenticate(const nlohmann::json& assertion) = 0;
};

class StaticAuthenticator : public Authenticator {
 public:
  void add_user(const std::string& username, const std::string& password);
  Result<std::string> authenticate(const nlohmann::json& assertion) override;

 private:
  std::map<std::string, std::string> credentials_;
};

class Provider {
 public:
  Provider(ProviderConfig config, std::shared_ptr<Authenticator> authn, Clock clock);

  Result<RegistrationResult> register_agent(
      const tokens::TokenEnvelope& owner_user_token, const nlohmann::json& metadata);

  Result<tokens::TokenEnvelope> issue_user_token(const nlohmann::json& assertion,
                                                 const std::string& user_key_hex,
                                                 std::int64_t requested_lifetime = 0);

  Result<tokens::TokenEnvelope> issue_agent_token(
      const std::string& local_id, const std::string& client_secret,
      const std::optional<std::string>& audience = std::nullopt);

  Result<tokens::HashRef> record_delegation(const tokens::TokenEnvelope& delegation);

  Result<IntrospectionResult> introspect(const std::string& token_hash_hex,
                                         const tokens::TokenEnvelope& caller);

  Status revoke(const std::string& token_hash_hex,
                const tokens::TokenEnvelope& owner_user_token);

  Result<tokens::ClaimSet> federation_verify(const tokens::TokenEnvelope& env);

  // federation peers may be declared after both providers exist
  void add_federation_peer(const std::string& host, FederationPeer peer);

  const ProviderConfig& config() const { return config_; }
  crypto::PublicKey public_key() const { return config_.signing_key.public_key; }
  const audit::AuditLog& audit_log() const { return audit_; }

  // storage inspection hook for tests (secrets must appear only hashed)
  std::vector<Registration> registrations() const;

 private:
  Result<tokens::ClaimSet> verify_own_token(const tokens::TokenEnvelope& env) const;
  Result<crypto::PublicKey> peer_key(const std::string& host, bool force_refresh);

  ProviderConfig config_;
  std::shared_ptr<Authenticator> authn_;
  Clock clock_;

  mutable std::mutex mu_;
  std::map<std::string, Registration> registrations_;
  std::map<std::string, tokens::TokenEnvelope> issued_;  // token hash -> envelope
  std::map<std::string, std::int64_t> revoked_;          // token hash -> revoked_at
  struct CachedKey {
    crypto::PublicKey key;
    std::int64_t fetched_at;
  };
  std::map<std::string, CachedKey> peer_key_cache_;
  audit::AuditLog audit_;
};

}  // namespace agentdel::provider
