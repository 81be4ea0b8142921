#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agentdel/crypto.hpp"
#include "agentdel/error.hpp"
#include "agentdel/policy.hpp"
#include "json.hpp"

namespace agentdel::tokens {

enum class TokenKind { user_id, agent_id, delegation };
const char* kind_name(TokenKind k);
std::optional<TokenKind> kind_from_name(const std::string& name);

// "user://host/local", "agent://host/local", or "op://host/op" for the
// provider service itself.
struct GlobalId {
  std::string scheme;  // "user" | "agent" | "op"
  std::string host;    // DNS name, optionally :port
  std::string local_id;

  std::string str() const;
  static Result<GlobalId> parse(const std::string& text);
  bool operator==(const GlobalId&) const = default;
  bool operator<(const GlobalId& o) const {
    return std::tie(scheme, host, local_id) < std::tie(o.scheme, o.host, o.local_id);
  }
};

struct HashRef {
  std::string hex;  // 64 lowercase hex chars

  bool valid() const;
  static HashRef of(const crypto::Digest& d) { return {crypto::to_hex(d)}; }
  bool operator==(const HashRef&) const = default;
  bool operator<(const HashRef& o) const { return hex < o.hex; }
};

struct ClaimSet {
  TokenKind kind = TokenKind::user_id;
  GlobalId issuer;
  GlobalId subject;
  std::int64_t issued_at = 0;
  std::int64_t expires_at = 0;
  nlohmann::json claims = nlohmann::json::object();  // extension payloads

  nlohmann::json to_json() const;
  static Result<ClaimSet> from_json(const nlohmann::json& j);
  Status validate() const;
  bool operator==(const ClaimSet& o) const;
};

struct TokenEnvelope {
  ClaimSet claims;
  std::string signer_key_id;
  crypto::Signature signature{};

  nlohmann::json to_json() const;
  static Result<TokenEnvelope> from_json(const nlohmann::json& j);

  // wire form: <b64url(claims json)>.<b64url(signature)>.<key_id>
  std::string encode() const;
  static Result<TokenEnvelope> decode(const std::string& wire);
};

// typed views over ClaimSet.claims

struct UserIdClaims {
  std::string user_key_hex;  // 32-byte Ed25519 public key, hex
  nlohmann::json display_claims;

  static Result<UserIdClaims> from(const ClaimSet& cs);
  crypto::PublicKey user_key() const;
};

struct AgentIdClaims {
  std::string local_id;
  GlobalId global_id;
  std::vector<std::string> capabilities;
  std::vector<std::string> limitations;
  nlohmann::json model_descriptor;
  bool pairwise = false;
  std::optional<std::string> agent_key_hex;  // set when the agent can re-delegate

  static Result<AgentIdClaims> from(const ClaimSet& cs);
  nlohmann::json to_claims() const;
};

struct DelegationClaims {
  HashRef user_token_ref;
  HashRef agent_token_ref;
  policy::Policy policy;
  std::optional<std::string> goal_summary;
  std::optional<std::string> audit_url;
  std::optional<std::string> revocation_url;
  std::optional<HashRef> parent_delegation_ref;

  static Result<DelegationClaims> from(const ClaimSet& cs);
};

struct VerifiedDelegation {
  UserIdClaims user;
  AgentIdClaims agent;  // the leaf agent in the chain
  std::vector<policy::Policy> effective_policies;  // root-first
  std::pair<std::int64_t, std::int64_t> validity_window;

  nlohmann::json to_json() const;
};

struct TrustStore {
  std::map<std::string, crypto::PublicKey> keys;       // key_id -> key
  std::map<std::string, std::string> issuer_key;        // issuer host -> key_id

  void add(const std::string& key_id, const crypto::PublicKey& key,
           const std::string& issuer_host = {});
  nlohmann::json to_json() const;
  static Result<TrustStore> from_json(const nlohmann::json& j);
};

std::string compose_global_id(const std::string& scheme,
                              const std::string& issuer_host,
                              const std::string& local_id);

Result<std::vector<std::uint8_t>> claim_bytes(const ClaimSet& claims);

Result<TokenEnvelope> sign_token(const ClaimSet& claims,
                                 const crypto::SecretKey& key,
                                 const std::string& key_id);

Result<ClaimSet> verify_token(const TokenEnvelope& env, const crypto::PublicKey& key,
                              std::int64_t now, std::int64_t skew);

HashRef token_hash(const TokenEnvelope& env);

struct DelegationExtras {
  std::optional<std::string> goal_summary;
  std::optional<std::string> audit_url;
  std::optional<std::string> revocation_url;
  std::optional<HashRef> parent_delegation_ref;
};

Result<TokenEnvelope> build_delegation(const TokenEnvelope& user_env,
                                       const TokenEnvelope& agent_env,
                                       const policy::Policy& policy,
                                       std::int64_t window_start,
                                       std::int64_t window_end,
                                       const DelegationExtras& extras,
                                       const crypto::SecretKey& user_key);

// A re-delegation hop: signed by the delegating agent's key, chained to its
// parent delegation by hash. The chain verifier checks the signing key against
// the parent's agent token.
Result<TokenEnvelope> build_redelegation(const TokenEnvelope& user_env,
                                         const TokenEnvelope& new_agent_env,
                                         const TokenEnvelope& parent_delegation,
                                         const GlobalId& delegating_agent,
                                         const policy::Policy& policy,
                                         std::int64_t window_start,
                                         std::int64_t window_end,
                                         const DelegationExtras& extras,
                                         const crypto::SecretKey& agent_key);

constexpr std::int64_t kDefaultSkewSeconds = 60;
constexpr std::size_t kDefaultMaxChainDepth = 4;

// Verifies a presented bundle: hash-bound references must resolve within the
// bundle, ID tokens verify under trusted provider keys, the root delegation
// under the user's bound key, re-delegations under the delegating agent's
// key, and every validity window must overlap around `now`.
Result<VerifiedDelegation> verify_delegation_chain(
    const std::vector<TokenEnvelope>& presented, const TrustStore& trust,
    std::int64_t now, std::int64_t skew = kDefaultSkewSeconds,
    std::size_t max_depth = kDefaultMaxChainDepth);

}  // namespace agentdel::tokens
