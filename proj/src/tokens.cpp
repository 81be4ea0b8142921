#include "agentdel/tokens.hpp"

#include <algorithm>

#include "agentdel/canonical.hpp"

namespace agentdel::tokens {

const char* kind_name(TokenKind k) {
  switch (k) {
    case TokenKind::user_id: return "user_id";
    case TokenKind::agent_id: return "agent_id";
    case TokenKind::delegation: return "delegation";
  }
  return "?";
}

std::optional<TokenKind> kind_from_name(const std::string& name) {
  if (name == "user_id") return TokenKind::user_id;
  if (name == "agent_id") return TokenKind::agent_id;
  if (name == "delegation") return TokenKind::delegation;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// identifiers

std::string GlobalId::str() const { return scheme + "://" + host + "/" + local_id; }

Result<GlobalId> GlobalId::parse(const std::string& text) {
  auto sep = text.find("://");
  if (sep == std::string::npos)
    return Error(Errc::ValidationError, "global id missing scheme: " + text);
  GlobalId id;
  id.scheme = text.substr(0, sep);
  if (id.scheme != "user" && id.scheme != "agent" && id.scheme != "op")
    return Error(Errc::ValidationError, "global id scheme must be user/agent/op");
  std::string rest = text.substr(sep + 3);
  auto slash = rest.find('/');
  if (slash == std::string::npos || slash == 0 || slash + 1 >= rest.size())
    return Error(Errc::ValidationError, "global id needs host and local id");
  id.host = rest.substr(0, slash);
  id.local_id = rest.substr(slash + 1);
  for (char c : id.host) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' ||
              c == '-' || c == ':';
    if (!ok)
      return Error(Errc::ValidationError, "invalid host character in global id");
  }
  return id;
}

bool HashRef::valid() const {
  if (hex.size() != 64) return false;
  return std::all_of(hex.begin(), hex.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

std::string compose_global_id(const std::string& scheme,
                              const std::string& issuer_host,
                              const std::string& local_id) {
  return scheme + "://" + issuer_host + "/" + local_id;
}

// ---------------------------------------------------------------------------
// claim sets

nlohmann::json ClaimSet::to_json() const {
  nlohmann::json j;
  j["kind"] = kind_name(kind);
  j["issuer"] = issuer.str();
  j["subject"] = subject.str();
  j["issued_at"] = issued_at;
  j["expires_at"] = expires_at;
  j["claims"] = claims;
  return j;
}

Result<ClaimSet> ClaimSet::from_json(const nlohmann::json& j) {
  if (!j.is_object()) return Error(Errc::MalformedEnvelope, "claims must be an object");
  ClaimSet cs;
  try {
    auto kind = kind_from_name(j.at("kind").get<std::string>());
    if (!kind) return Error(Errc::MalformedEnvelope, "unknown token kind");
    cs.kind = *kind;
    auto issuer = GlobalId::parse(j.at("issuer").get<std::string>());
    if (!issuer.ok()) return Error(Errc::MalformedEnvelope, issuer.error().describe());
    cs.issuer = issuer.value();
    auto subject = GlobalId::parse(j.at("subject").get<std::string>());
    if (!subject.ok()) return Error(Errc::MalformedEnvelope, subject.error().describe());
    cs.subject = subject.value();
    cs.issued_at = j.at("issued_at").get<std::int64_t>();
    cs.expires_at = j.at("expires_at").get<std::int64_t>();
    cs.claims = j.value("claims", nlohmann::json::object());
    if (!cs.claims.is_object())
      return Error(Errc::MalformedEnvelope, "claims payload must be an object");
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::MalformedEnvelope, e.what());
  }
  auto st = cs.validate();
  if (!st.ok()) return Error(Errc::MalformedEnvelope, st.error().describe());
  return cs;
}

Status ClaimSet::validate() const {
  if (expires_at <= issued_at)
    return Error(Errc::ValidationError, "expires_at must be after issued_at");
  switch (kind) {
    case TokenKind::user_id: {
      auto view = UserIdClaims::from(*this);
      if (!view.ok()) return view.error();
      break;
    }
    case TokenKind::agent_id: {
      auto view = AgentIdClaims::from(*this);
      if (!view.ok()) return view.error();
      if (!view.value().pairwise) {
        std::string expected =
            compose_global_id("agent", issuer.host, view.value().local_id);
        if (view.value().global_id.str() != expected)
          return Error(Errc::ValidationError,
                       "non-pairwise global_id must compose from issuer and local_id");
      }
      break;
    }
    case TokenKind::delegation: {
      auto view = DelegationClaims::from(*this);
      if (!view.ok()) return view.error();
      break;
    }
  }
  return ok_status();
}

bool ClaimSet::operator==(const ClaimSet& o) const {
  return kind == o.kind && issuer == o.issuer && subject == o.subject &&
         issued_at == o.issued_at && expires_at == o.expires_at && claims == o.claims;
}

Result<UserIdClaims> UserIdClaims::from(const ClaimSet& cs) {
  if (cs.kind != TokenKind::user_id)
    return Error(Errc::KindMismatch, "not a user_id token");
  UserIdClaims v;
  if (!cs.claims.contains("user_key") || !cs.claims["user_key"].is_string())
    return Error(Errc::ValidationError, "user_id token requires user_key claim");
  v.user_key_hex = cs.claims["user_key"].get<std::string>();
  if (!crypto::array_from_hex<crypto::kPublicKeyBytes>(v.user_key_hex))
    return Error(Errc::ValidationError, "user_key is not a valid public key");
  v.display_claims = cs.claims.value("display", nlohmann::json::object());
  return v;
}

crypto::PublicKey UserIdClaims::user_key() const {
  return *crypto::array_from_hex<crypto::kPublicKeyBytes>(user_key_hex);
}

Result<AgentIdClaims> AgentIdClaims::from(const ClaimSet& cs) {
  if (cs.kind != TokenKind::agent_id)
    return Error(Errc::KindMismatch, "not an agent_id token");
  AgentIdClaims v;
  try {
    v.local_id = cs.claims.at("local_id").get<std::string>();
    auto gid = GlobalId::parse(cs.claims.at("global_id").get<std::string>());
    if (!gid.ok()) return gid.error();
    v.global_id = gid.value();
    for (const auto& c : cs.claims.value("capabilities", nlohmann::json::array()))
      v.capabilities.push_back(c.get<std::string>());
    for (const auto& l : cs.claims.value("limitations", nlohmann::json::array()))
      v.limitations.push_back(l.get<std::string>());
    v.model_descriptor = cs.claims.value("model_descriptor", nlohmann::json::object());
    v.pairwise = cs.claims.value("pairwise", false);
    if (cs.claims.contains("agent_key")) {
      v.agent_key_hex = cs.claims["agent_key"].get<std::string>();
      if (!crypto::array_from_hex<crypto::kPublicKeyBytes>(*v.agent_key_hex))
        return Error(Errc::ValidationError, "agent_key is not a valid public key");
    }
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  return v;
}

nlohmann::json AgentIdClaims::to_claims() const {
  nlohmann::json j;
  j["local_id"] = local_id;
  j["global_id"] = global_id.str();
  j["capabilities"] = capabilities;
  j["limitations"] = limitations;
  if (!model_descriptor.empty()) j["model_descriptor"] = model_descriptor;
  j["pairwise"] = pairwise;
  if (agent_key_hex) j["agent_key"] = *agent_key_hex;
  return j;
}

Result<DelegationClaims> DelegationClaims::from(const ClaimSet& cs) {
  if (cs.kind != TokenKind::delegation)
    return Error(Errc::KindMismatch, "not a delegation token");
  DelegationClaims v;
  try {
    v.user_token_ref = HashRef{cs.claims.at("user_token_ref").get<std::string>()};
    v.agent_token_ref = HashRef{cs.claims.at("agent_token_ref").get<std::string>()};
    if (!v.user_token_ref.valid() || !v.agent_token_ref.valid())
      return Error(Errc::ValidationError, "token refs must be 64 lowercase hex chars");
    auto pol = policy::Policy::from_json(cs.claims.at("policy"));
    if (!pol.ok()) return pol.error();
    v.policy = pol.value();
    if (cs.claims.contains("goal_summary"))
      v.goal_summary = cs.claims["goal_summary"].get<std::string>();
    if (cs.claims.contains("audit_url"))
      v.audit_url = cs.claims["audit_url"].get<std::string>();
    if (cs.claims.contains("revocation_url"))
      v.revocation_url = cs.claims["revocation_url"].get<std::string>();
    if (cs.claims.contains("parent_delegation_ref")) {
      v.parent_delegation_ref =
          HashRef{cs.claims["parent_delegation_ref"].get<std::string>()};
      if (!v.parent_delegation_ref->valid())
        return Error(Errc::ValidationError, "parent ref must be 64 lowercase hex chars");
    }
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------
// envelopes

nlohmann::json TokenEnvelope::to_json() const {
  nlohmann::json j;
  j["claims"] = claims.to_json();
  j["signer_key_id"] = signer_key_id;
  j["signature"] = crypto::to_hex(signature);
  return j;
}

Result<TokenEnvelope> TokenEnvelope::from_json(const nlohmann::json& j) {
  if (!j.is_object()) return Error(Errc::MalformedEnvelope, "envelope must be an object");
  TokenEnvelope env;
  try {
    auto cs = ClaimSet::from_json(j.at("claims"));
    if (!cs.ok()) return cs.error();
    env.claims = cs.value();
    env.signer_key_id = j.at("signer_key_id").get<std::string>();
    auto sig = crypto::array_from_hex<crypto::kSignatureBytes>(
        j.at("signature").get<std::string>());
    if (!sig) return Error(Errc::MalformedEnvelope, "signature must be 64 bytes hex");
    env.signature = *sig;
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::MalformedEnvelope, e.what());
  }
  return env;
}

std::string TokenEnvelope::encode() const {
  auto bytes = claim_bytes(claims);
  std::vector<std::uint8_t> sig(signature.begin(), signature.end());
  return crypto::base64url_encode(bytes.ok() ? bytes.value()
                                             : std::vector<std::uint8_t>{}) +
         "." + crypto::base64url_encode(sig) + "." + signer_key_id;
}

Result<TokenEnvelope> TokenEnvelope::decode(const std::string& wire) {
  auto first = wire.find('.');
  if (first == std::string::npos)
    return Error(Errc::MalformedEnvelope, "wire token needs three dot-joined parts");
  auto second = wire.find('.', first + 1);
  if (second == std::string::npos)
    return Error(Errc::MalformedEnvelope, "wire token needs three dot-joined parts");
  auto claims_b = crypto::base64url_decode(wire.substr(0, first));
  auto sig_b = crypto::base64url_decode(wire.substr(first + 1, second - first - 1));
  if (!claims_b || !sig_b || sig_b->size() != crypto::kSignatureBytes)
    return Error(Errc::MalformedEnvelope, "bad base64url payload");
  nlohmann::json cj = nlohmann::json::parse(*claims_b, nullptr, false);
  if (cj.is_discarded())
    return Error(Errc::MalformedEnvelope, "claims payload is not valid JSON");
  auto cs = ClaimSet::from_json(cj);
  if (!cs.ok()) return cs.error();
  TokenEnvelope env;
  env.claims = cs.value();
  std::copy(sig_b->begin(), sig_b->end(), env.signature.begin());
  env.signer_key_id = wire.substr(second + 1);
  return env;
}

// ---------------------------------------------------------------------------
// operations

Result<std::vector<std::uint8_t>> claim_bytes(const ClaimSet& claims) {
  return canonical_bytes(claims.to_json());
}

Result<TokenEnvelope> sign_token(const ClaimSet& claims, const crypto::SecretKey& key,
                                 const std::string& key_id) {
  auto st = claims.validate();
  if (!st.ok()) return st.error();
  auto bytes = claim_bytes(claims);
  if (!bytes.ok()) return bytes.error();
  TokenEnvelope env;
  env.claims = claims;
  env.signer_key_id = key_id;
  env.signature = crypto::sign(bytes.value(), key);
  return env;
}

namespace {

Result<ClaimSet> verify_signature_only(const TokenEnvelope& env,
                                       const crypto::PublicKey& key) {
  auto st = env.claims.validate();
  if (!st.ok()) return Error(Errc::MalformedEnvelope, st.error().describe());
  auto bytes = claim_bytes(env.claims);
  if (!bytes.ok()) return Error(Errc::MalformedEnvelope, bytes.error().describe());
  if (!crypto::verify(bytes.value(), env.signature, key))
    return Error(Errc::BadSignature, "signature does not verify");
  return env.claims;
}

}  // namespace

Result<ClaimSet> verify_token(const TokenEnvelope& env, const crypto::PublicKey& key,
                              std::int64_t now, std::int64_t skew) {
  auto cs = verify_signature_only(env, key);
  if (!cs.ok()) return cs.error();
  if (now < env.claims.issued_at - skew)
    return Error(Errc::NotYetValid, "token not yet valid");
  if (now >= env.claims.expires_at + skew)
    return Error(Errc::Expired, "token expired");
  return cs;
}

HashRef token_hash(const TokenEnvelope& env) {
  auto bytes = claim_bytes(env.claims);
  std::vector<std::uint8_t> data =
      bytes.ok() ? bytes.value() : std::vector<std::uint8_t>{};
  data.insert(data.end(), env.signature.begin(), env.signature.end());
  return HashRef::of(crypto::sha256(data));
}

Result<TokenEnvelope> build_delegation(const TokenEnvelope& user_env,
                                       const TokenEnvelope& agent_env,
                                       const policy::Policy& policy,
                                       std::int64_t window_start,
                                       std::int64_t window_end,
                                       const DelegationExtras& extras,
                                       const crypto::SecretKey& user_key) {
  if (user_env.claims.kind != TokenKind::user_id)
    return Error(Errc::KindMismatch, "first token must be a user_id token");
  if (agent_env.claims.kind != TokenKind::agent_id)
    return Error(Errc::KindMismatch, "second token must be an agent_id token");
  if (window_end <= window_start)
    return Error(Errc::ValidationError, "delegation window end before start");
  auto user_view = UserIdClaims::from(user_env.claims);
  if (!user_view.ok()) return user_view.error();
  if (crypto::public_of(user_key) != user_view.value().user_key())
    return Error(Errc::KeyMismatch, "signing key does not match user token's user_key");

  ClaimSet cs;
  cs.kind = TokenKind::delegation;
  cs.issuer = user_env.claims.subject;
  cs.subject = agent_env.claims.subject;
  cs.issued_at = window_start;
  cs.expires_at = window_end;
  cs.claims["user_token_ref"] = token_hash(user_env).hex;
  cs.claims["agent_token_ref"] = token_hash(agent_env).hex;
  cs.claims["policy"] = policy.to_json();
  if (extras.goal_summary) cs.claims["goal_summary"] = *extras.goal_summary;
  if (extras.audit_url) cs.claims["audit_url"] = *extras.audit_url;
  if (extras.revocation_url) cs.claims["revocation_url"] = *extras.revocation_url;
  if (extras.parent_delegation_ref)
    cs.claims["parent_delegation_ref"] = extras.parent_delegation_ref->hex;

  return sign_token(cs, user_key, user_env.claims.subject.str());
}

Result<TokenEnvelope> build_redelegation(const TokenEnvelope& user_env,
                                         const TokenEnvelope& new_agent_env,
                                         const TokenEnvelope& parent_delegation,
                                         const GlobalId& delegating_agent,
                                         const policy::Policy& policy,
                                         std::int64_t window_start,
                                         std::int64_t window_end,
                                         const DelegationExtras& extras,
                                         const crypto::SecretKey& agent_key) {
  if (user_env.claims.kind != TokenKind::user_id)
    return Error(Errc::KindMismatch, "first token must be a user_id token");
  if (new_agent_env.claims.kind != TokenKind::agent_id)
    return Error(Errc::KindMismatch, "second token must be an agent_id token");
  if (parent_delegation.claims.kind != TokenKind::delegation)
    return Error(Errc::KindMismatch, "parent must be a delegation token");
  if (window_end <= window_start)
    return Error(Errc::ValidationError, "delegation window end before start");

  ClaimSet cs;
  cs.kind = TokenKind::delegation;
  cs.issuer = delegating_agent;
  cs.subject = new_agent_env.claims.subject;
  cs.issued_at = window_start;
  cs.expires_at = window_end;
  cs.claims["user_token_ref"] = token_hash(user_env).hex;
  cs.claims["agent_token_ref"] = token_hash(new_agent_env).hex;
  cs.claims["parent_delegation_ref"] = token_hash(parent_delegation).hex;
  cs.claims["policy"] = policy.to_json();
  if (extras.goal_summary) cs.claims["goal_summary"] = *extras.goal_summary;
  if (extras.audit_url) cs.claims["audit_url"] = *extras.audit_url;
  if (extras.revocation_url) cs.claims["revocation_url"] = *extras.revocation_url;

  return sign_token(cs, agent_key, delegating_agent.str());
}

// ---------------------------------------------------------------------------
// trust store

void TrustStore::add(const std::string& key_id, const crypto::PublicKey& key,
                     const std::string& issuer_host) {
  keys[key_id] = key;
  if (!issuer_host.empty()) issuer_key[issuer_host] = key_id;
}

nlohmann::json TrustStore::to_json() const {
  nlohmann::json j;
  j["keys"] = nlohmann::json::object();
  for (const auto& [id, key] : keys) j["keys"][id] = crypto::to_hex(key);
  j["issuers"] = issuer_key;
  return j;
}

Result<TrustStore> TrustStore::from_json(const nlohmann::json& j) {
  TrustStore ts;
  try {
    const nlohmann::json keys = j.value("keys", nlohmann::json::object());
    for (const auto& [id, hex] : keys.items()) {
      auto key = crypto::array_from_hex<crypto::kPublicKeyBytes>(hex.get<std::string>());
      if (!key) return Error(Errc::ValidationError, "bad public key for " + id);
      ts.keys[id] = *key;
    }
    const nlohmann::json issuers = j.value("issuers", nlohmann::json::object());
    for (const auto& [host, id] : issuers.items())
      ts.issuer_key[host] = id.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  return ts;
}

// ---------------------------------------------------------------------------
// chain verification

nlohmann::json VerifiedDelegation::to_json() const {
  nlohmann::json j;
  j["user_key"] = user.user_key_hex;
  j["agent"] = agent.to_claims();
  j["validity_window"] = {validity_window.first, validity_window.second};
  j["effective_policies"] = nlohmann::json::array();
  for (const auto& p : effective_policies) j["effective_policies"].push_back(p.to_json());
  return j;
}

namespace {

// provider-signed ID tokens resolve their key through the trust store
Result<crypto::PublicKey> trusted_key(const TokenEnvelope& env, const TrustStore& trust) {
  auto by_id = trust.keys.find(env.signer_key_id);
  if (by_id != trust.keys.end()) return by_id->second;
  auto by_issuer = trust.issuer_key.find(env.claims.issuer.host);
  if (by_issuer != trust.issuer_key.end()) {
    auto key = trust.keys.find(by_issuer->second);
    if (key != trust.keys.end()) return key->second;
  }
  return Error(Errc::UnknownPeer,
               "no trusted key for issuer " + env.claims.issuer.host);
}

}  // namespace

Result<VerifiedDelegation> verify_delegation_chain(
    const std::vector<TokenEnvelope>& presented, const TrustStore& trust,
    std::int64_t now, std::int64_t skew, std::size_t max_depth) {
  const TokenEnvelope* user_env = nullptr;
  std::map<std::string, const TokenEnvelope*> agents;  // hash -> envelope
  std::map<std::string, const TokenEnvelope*> delegations;

  for (const auto& env : presented) {
    switch (env.claims.kind) {
      case TokenKind::user_id:
        if (user_env)
          return Error(Errc::MalformedEnvelope, "bundle has multiple user tokens");
        user_env = &env;
        break;
      case TokenKind::agent_id:
        agents[token_hash(env).hex] = &env;
        break;
      case TokenKind::delegation:
        delegations[token_hash(env).hex] = &env;
        break;
    }
  }
  if (!user_env || agents.empty() || delegations.empty())
    return Error(Errc::MalformedEnvelope,
                 "bundle needs one user token, an agent token and a delegation");
  if (delegations.size() > max_depth)
    return Error(Errc::DepthExceeded, "delegation chain exceeds max depth");

  // ID-token signatures under trusted provider keys
  auto user_key = trusted_key(*user_env, trust);
  if (!user_key.ok()) return user_key.error();
  auto user_claims = verify_signature_only(*user_env, user_key.value());
  if (!user_claims.ok()) return user_claims.error();
  auto user_view = UserIdClaims::from(user_claims.value());
  if (!user_view.ok()) return user_view.error();

  for (const auto& [hash, env] : agents) {
    auto key = trusted_key(*env, trust);
    if (!key.ok()) return key.error();
    auto claims = verify_signature_only(*env, key.value());
    if (!claims.ok()) return claims.error();
  }

  // order delegations root-first along parent refs
  std::map<std::string, const TokenEnvelope*> by_parent;
  const TokenEnvelope* root = nullptr;
  for (const auto& [hash, env] : delegations) {
    auto view = DelegationClaims::from(env->claims);
    if (!view.ok()) return view.error();
    if (!view.value().parent_delegation_ref) {
      if (root) return Error(Errc::MalformedEnvelope, "multiple root delegations");
      root = env;
    } else {
      const std::string& parent = view.value().parent_delegation_ref->hex;
      if (!by_parent.emplace(parent, env).second)
        return Error(Errc::MalformedEnvelope, "branching delegation chain");
    }
  }
  if (!root) {
    // no parentless delegation: either a parent is missing from the bundle, or
    // every parent resolves inside the set — a genuine reference cycle
    for (const auto& [parent, env] : by_parent)
      if (!delegations.count(parent))
        return Error(Errc::DanglingRef,
                     "delegation references a parent not in the bundle");
    return Error(Errc::ChainCycle, "delegation chain contains a cycle");
  }

  std::vector<const TokenEnvelope*> chain;
  const TokenEnvelope* cur = root;
  while (cur) {
    chain.push_back(cur);
    if (chain.size() > delegations.size())
      return Error(Errc::ChainCycle, "delegation chain contains a cycle");
    auto next = by_parent.find(token_hash(*cur).hex);
    cur = next == by_parent.end() ? nullptr : next->second;
  }
  if (chain.size() != delegations.size())
    return Error(Errc::DanglingRef, "delegation references a parent not in the bundle");

  const std::string user_hash = token_hash(*user_env).hex;
  std::vector<policy::Policy> policies;
  const TokenEnvelope* delegating_agent = nullptr;  // agent of the previous hop

  for (std::size_t hop = 0; hop < chain.size(); ++hop) {
    auto view = DelegationClaims::from(chain[hop]->claims);
    if (!view.ok()) return view.error();
    const DelegationClaims& d = view.value();
    if (d.user_token_ref.hex != user_hash)
      return Error(Errc::DanglingRef,
                   "delegation references a user token not in the bundle");
    auto agent_it = agents.find(d.agent_token_ref.hex);
    if (agent_it == agents.end())
      return Error(Errc::DanglingRef,
                   "delegation references an agent token not in the bundle");

    crypto::PublicKey signer_key;
    if (hop == 0) {
      signer_key = user_view.value().user_key();
    } else {
      auto prev_agent = AgentIdClaims::from(delegating_agent->claims);
      if (!prev_agent.ok()) return prev_agent.error();
      if (!prev_agent.value().agent_key_hex)
        return Error(Errc::BadSignature,
                     "re-delegating agent token carries no agent_key");
      signer_key = *crypto::array_from_hex<crypto::kPublicKeyBytes>(
          *prev_agent.value().agent_key_hex);
    }
    auto claims = verify_signature_only(*chain[hop], signer_key);
    if (!claims.ok()) return claims.error();
    policies.push_back(d.policy);
    delegating_agent = agent_it->second;
  }

  // validity = intersection of every member token's window
  std::int64_t lo = user_env->claims.issued_at;
  std::int64_t hi = user_env->claims.expires_at;
  auto narrow = [&](const TokenEnvelope& env) {
    lo = std::max(lo, env.claims.issued_at);
    hi = std::min(hi, env.claims.expires_at);
  };
  for (const auto& [hash, env] : agents) narrow(*env);
  for (const auto* env : chain) narrow(*env);
  if (lo >= hi) return Error(Errc::Expired, "empty validity intersection");
  if (now < lo - skew) return Error(Errc::NotYetValid, "chain not yet valid");
  if (now >= hi + skew) return Error(Errc::Expired, "chain expired");

  auto leaf_agent = AgentIdClaims::from(delegating_agent->claims);
  if (!leaf_agent.ok()) return leaf_agent.error();

  VerifiedDelegation out;
  out.user = user_view.value();
  out.agent = leaf_agent.value();
  out.effective_policies = std::move(policies);
  out.validity_window = {lo, hi};
  return out;
}

}  // namespace agentdel::tokens
