#pragma once

// Shared fixtures for the test binaries: deterministic keys and a canned
// user/agent/delegation chain.

#include <string>

#include "agentdel/crypto.hpp"
#include "agentdel/policy.hpp"
#include "agentdel/tokens.hpp"

namespace testutil {

using namespace agentdel;

inline crypto::KeyPair seeded_key(const std::string& label) {
  auto digest = crypto::sha256(std::vector<std::uint8_t>(label.begin(), label.end()));
  return crypto::keypair_from_seed(digest);
}

inline crypto::KeyPair zero_key() {
  return crypto::keypair_from_seed(crypto::Digest{});
}

constexpr std::int64_t kNow = 1700000000;

struct Chain {
  crypto::KeyPair provider_key = seeded_key("provider");
  crypto::KeyPair user_key = seeded_key("user");
  crypto::KeyPair agent_key = seeded_key("agent");
  tokens::TokenEnvelope user_tok;
  tokens::TokenEnvelope agent_tok;
  tokens::TokenEnvelope delegation;
  tokens::TrustStore trust;
};

inline policy::Policy simple_policy() {
  auto p = policy::Policy::from_json(nlohmann::json::parse(R"({
    "policy_id": "test",
    "default_effect": "deny",
    "rules": [
      {"effect": "permit", "actions": ["read"],
       "resources": ["https://files.example.org/**"], "constraints": []}
    ]})"));
  return p.value();
}

// user and agent tokens issued by op1.example, delegation signed by the user,
// validity [kNow, kNow+3600]
inline Chain make_chain(const policy::Policy& pol = simple_policy(),
                        bool agent_with_key = false) {
  Chain c;
  tokens::ClaimSet user_cs;
  user_cs.kind = tokens::TokenKind::user_id;
  user_cs.issuer = {"op", "op1.example", "op1"};
  user_cs.subject = {"user", "op1.example", "alice"};
  user_cs.issued_at = kNow;
  user_cs.expires_at = kNow + 3600;
  user_cs.claims["user_key"] = crypto::to_hex(c.user_key.public_key);
  c.user_tok = tokens::sign_token(user_cs, c.provider_key.secret_key,
                                  "op1.example/key1")
                   .value();

  tokens::ClaimSet agent_cs;
  agent_cs.kind = tokens::TokenKind::agent_id;
  agent_cs.issuer = {"op", "op1.example", "op1"};
  agent_cs.subject = {"agent", "op1.example", "assistant"};
  agent_cs.issued_at = kNow;
  agent_cs.expires_at = kNow + 3600;
  agent_cs.claims["local_id"] = "assistant";
  agent_cs.claims["global_id"] = "agent://op1.example/assistant";
  agent_cs.claims["capabilities"] = {"fetch"};
  agent_cs.claims["limitations"] = nlohmann::json::array();
  agent_cs.claims["pairwise"] = false;
  if (agent_with_key)
    agent_cs.claims["agent_key"] = crypto::to_hex(c.agent_key.public_key);
  c.agent_tok = tokens::sign_token(agent_cs, c.provider_key.secret_key,
                                   "op1.example/key1")
                    .value();

  c.delegation = tokens::build_delegation(c.user_tok, c.agent_tok, pol, kNow,
                                          kNow + 3600, {}, c.user_key.secret_key)
                     .value();
  c.trust.add("op1.example/key1", c.provider_key.public_key, "op1.example");
  return c;
}

}  // namespace testutil
