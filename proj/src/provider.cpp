#include "agentdel/provider.hpp"

#include "httplib.h"

namespace agentdel::provider {

namespace {

std::string sha256_hex_of_text(const std::string& text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  return crypto::to_hex(crypto::sha256(bytes));
}

}  // namespace

nlohmann::json IntrospectionResult::to_json() const {
  nlohmann::json j;
  j["active"] = active;
  j["kind"] = kind;
  j["subject"] = subject;
  j["expires_at"] = expires_at;
  j["revoked"] = revoked;
  j["reasons"] = reasons;
  return j;
}

Result<IntrospectionResult> IntrospectionResult::from_json(const nlohmann::json& j) {
  IntrospectionResult r;
  try {
    r.active = j.at("active").get<bool>();
    r.kind = j.value("kind", "");
    r.subject = j.value("subject", "");
    r.expires_at = j.value("expires_at", std::int64_t{0});
    r.revoked = j.value("revoked", false);
    for (const auto& s : j.value("reasons", nlohmann::json::array()))
      r.reasons.push_back(s.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  return r;
}

void StaticAuthenticator::add_user(const std::string& username,
                                   const std::string& password) {
  credentials_[username] = password;
}

Result<std::string> StaticAuthenticator::authenticate(const nlohmann::json& assertion) {
  if (!assertion.is_object() || !assertion.contains("username") ||
      !assertion.contains("password"))
    return Error(Errc::AuthnFailed, "assertion needs username and password");
  std::string username = assertion["username"];
  auto it = credentials_.find(username);
  if (it == credentials_.end() || it->second != assertion["password"])
    return Error(Errc::AuthnFailed, "unknown user or wrong credential");
  return username;
}

Provider::Provider(ProviderConfig config, std::shared_ptr<Authenticator> authn,
                   Clock clock)
    : config_(std::move(config)), authn_(std::move(authn)), clock_(std::move(clock)) {}

Result<tokens::ClaimSet> Provider::verify_own_token(
    const tokens::TokenEnvelope& env) const {
  return tokens::verify_token(env, config_.signing_key.public_key, clock_(),
                              config_.skew);
}

Result<RegistrationResult> Provider::register_agent(
    const tokens::TokenEnvelope& owner_user_token, const nlohmann::json& metadata) {
  auto owner = verify_own_token(owner_user_token);
  if (!owner.ok() || owner.value().kind != tokens::TokenKind::user_id)
    return Error(Errc::InvalidOwnerToken,
                 owner.ok() ? "owner token is not a user token"
                            : owner.error().describe());

  std::lock_guard lock(mu_);
  std::string local_id;
  if (metadata.contains("local_id")) {
    local_id = metadata["local_id"].get<std::string>();
    if (registrations_.count(local_id))
      return Error(Errc::DuplicateLocalId, "local_id '" + local_id + "' already taken");
  } else {
    do {
      local_id = "agent-" + crypto::to_hex(crypto::random_bytes(8).data(), 8);
    } while (registrations_.count(local_id));
  }

  std::string secret = crypto::to_hex(crypto::random_bytes(32).data(), 32);

  Registration reg;
  reg.local_id = local_id;
  reg.client_secret_hash = sha256_hex_of_text(secret);
  reg.owner = owner.value().subject.str();
  reg.created_at = clock_();
  auto& meta = reg.agent_metadata;
  meta.local_id = local_id;
  for (const auto& c : metadata.value("capabilities", nlohmann::json::array()))
    meta.capabilities.push_back(c.get<std::string>());
  for (const auto& l : metadata.value("limitations", nlohmann::json::array()))
    meta.limitations.push_back(l.get<std::string>());
  meta.model_descriptor = metadata.value("model_descriptor", nlohmann::json::object());
  meta.pairwise = metadata.value("pairwise", false);
  if (metadata.contains("agent_key")) {
    std::string key_hex = metadata["agent_key"].get<std::string>();
    if (!crypto::array_from_hex<crypto::kPublicKeyBytes>(key_hex))
      return Error(Errc::ValidationError, "agent_key is not a valid public key");
    meta.agent_key_hex = key_hex;
  }
  registrations_[local_id] = reg;

  (void)audit_.append(audit::EventKind::registration, reg.owner, {local_id},
                      std::nullopt, clock_());
  return RegistrationResult{local_id, secret};
}

Result<tokens::TokenEnvelope> Provider::issue_user_token(
    const nlohmann::json& assertion, const std::string& user_key_hex,
    std::int64_t requested_lifetime) {
  auto username = authn_->authenticate(assertion);
  if (!username.ok()) return username.error();
  if (!crypto::array_from_hex<crypto::kPublicKeyBytes>(user_key_hex))
    return Error(Errc::ValidationError, "user_key is not a valid public key");

  std::int64_t lifetime = config_.max_user_token_lifetime;
  if (requested_lifetime > 0)
    lifetime = std::min(requested_lifetime, config_.max_user_token_lifetime);

  tokens::ClaimSet cs;
  cs.kind = tokens::TokenKind::user_id;
  cs.issuer = {"op", config_.issuer_host, "op"};
  cs.subject = {"user", config_.issuer_host, username.value()};
  cs.issued_at = clock_();
  cs.expires_at = cs.issued_at + lifetime;
  cs.claims["user_key"] = user_key_hex;

  auto env = tokens::sign_token(cs, config_.signing_key.secret_key, config_.key_id);
  if (!env.ok()) return env.error();
  {
    std::lock_guard lock(mu_);
    issued_[tokens::token_hash(env.value()).hex] = env.value();
  }
  (void)audit_.append(audit::EventKind::issue, cs.subject.str(),
                      {tokens::token_hash(env.value()).hex}, std::nullopt, clock_());
  return env;
}

Result<tokens::TokenEnvelope> Provider::issue_agent_token(
    const std::string& local_id, const std::string& client_secret,
    const std::optional<std::string>& audience) {
  Registration reg;
  {
    std::lock_guard lock(mu_);
    auto it = registrations_.find(local_id);
    if (it == registrations_.end() ||
        it->second.client_secret_hash != sha256_hex_of_text(client_secret))
      return Error(Errc::BadClientSecret, "client credentials rejected");
    reg = it->second;
  }

  tokens::AgentIdClaims agent = reg.agent_metadata;
  if (audience && reg.agent_metadata.pairwise) {
    // audience-specific pseudonym: sha256(salt || local_id || audience)
    std::vector<std::uint8_t> input = config_.pairwise_salt;
    input.insert(input.end(), local_id.begin(), local_id.end());
    input.insert(input.end(), audience->begin(), audience->end());
    agent.global_id = {"agent", config_.issuer_host,
                       crypto::to_hex(crypto::sha256(input))};
    agent.pairwise = true;
  } else {
    agent.global_id = {"agent", config_.issuer_host, local_id};
    agent.pairwise = false;
  }

  tokens::ClaimSet cs;
  cs.kind = tokens::TokenKind::agent_id;
  cs.issuer = {"op", config_.issuer_host, "op"};
  cs.subject = agent.global_id;
  cs.issued_at = clock_();
  cs.expires_at = cs.issued_at + config_.max_agent_token_lifetime;
  cs.claims = agent.to_claims();

  auto env = tokens::sign_token(cs, config_.signing_key.secret_key, config_.key_id);
  if (!env.ok()) return env.error();
  {
    std::lock_guard lock(mu_);
    issued_[tokens::token_hash(env.value()).hex] = env.value();
  }
  (void)audit_.append(audit::EventKind::issue, agent.global_id.str(),
                      {tokens::token_hash(env.value()).hex}, std::nullopt, clock_());
  return env;
}

Result<tokens::HashRef> Provider::record_delegation(
    const tokens::TokenEnvelope& delegation) {
  auto view = tokens::DelegationClaims::from(delegation.claims);
  if (!view.ok()) return view.error();

  tokens::TokenEnvelope user_env;
  {
    std::lock_guard lock(mu_);
    auto user_it = issued_.find(view.value().user_token_ref.hex);
    auto agent_it = issued_.find(view.value().agent_token_ref.hex);
    if (user_it == issued_.end() || agent_it == issued_.end())
      return Error(Errc::UnknownReferencedToken,
                   "delegation references tokens not minted here");
    user_env = user_it->second;
  }
  auto user_view = tokens::UserIdClaims::from(user_env.claims);
  if (!user_view.ok()) return user_view.error();
  auto verified = tokens::verify_token(delegation, user_view.value().user_key(),
                                       clock_(), config_.skew);
  if (!verified.ok()) return verified.error();

  auto hash = tokens::token_hash(delegation);
  {
    std::lock_guard lock(mu_);
    issued_.emplace(hash.hex, delegation);  // idempotent
  }
  (void)audit_.append(audit::EventKind::delegate, delegation.claims.issuer.str(),
                      {hash.hex}, std::nullopt, clock_());
  return hash;
}

Result<IntrospectionResult> Provider::introspect(const std::string& token_hash_hex,
                                                 const tokens::TokenEnvelope& caller) {
  // caller must present a valid agent token from this provider or a peer
  if (caller.claims.kind != tokens::TokenKind::agent_id)
    return Error(Errc::CallerUnauthenticated, "caller must present an agent token");
  if (caller.claims.issuer.host == config_.issuer_host) {
    auto cs = verify_own_token(caller);
    if (!cs.ok()) return Error(Errc::CallerUnauthenticated, cs.error().describe());
  } else {
    auto cs = federation_verify(caller);
    if (!cs.ok()) return Error(Errc::CallerUnauthenticated, cs.error().describe());
  }

  tokens::TokenEnvelope env;
  bool revoked = false;
  {
    std::lock_guard lock(mu_);
    auto it = issued_.find(token_hash_hex);
    if (it == issued_.end())
      return Error(Errc::UnknownToken, "token was not minted or recorded here");
    env = it->second;
    revoked = revoked_.count(token_hash_hex) > 0;
  }

  IntrospectionResult r;
  r.kind = tokens::kind_name(env.claims.kind);
  r.subject = env.claims.subject.str();
  r.expires_at = env.claims.expires_at;
  r.revoked = revoked;
  std::int64_t now = clock_();
  bool in_window = now >= env.claims.issued_at - config_.skew &&
                   now < env.claims.expires_at + config_.skew;
  r.active = in_window && !revoked;
  if (revoked) r.reasons.push_back("Revoked");
  if (!in_window) r.reasons.push_back(now < env.claims.issued_at ? "NotYetValid" : "Expired");

  (void)audit_.append(audit::EventKind::authorize, caller.claims.subject.str(),
                      {token_hash_hex},
                      nlohmann::json{{"introspection", r.active}}, now);
  return r;
}

Status Provider::revoke(const std::string& token_hash_hex,
                        const tokens::TokenEnvelope& owner_user_token) {
  auto owner = verify_own_token(owner_user_token);
  if (!owner.ok() || owner.value().kind != tokens::TokenKind::user_id)
    return Error(Errc::NotOwner, "owner token rejected");
  std::string owner_id = owner.value().subject.str();

  tokens::TokenEnvelope env;
  {
    std::lock_guard lock(mu_);
    auto it = issued_.find(token_hash_hex);
    if (it == issued_.end())
      return Error(Errc::UnknownToken, "token was not minted or recorded here");
    env = it->second;
  }

  bool owns = false;
  switch (env.claims.kind) {
    case tokens::TokenKind::user_id:
      owns = env.claims.subject.str() == owner_id;
      break;
    case tokens::TokenKind::delegation:
      owns = env.claims.issuer.str() == owner_id;
      break;
    case tokens::TokenKind::agent_id: {
      std::lock_guard lock(mu_);
      for (const auto& [local_id, reg] : registrations_) {
        if (reg.agent_metadata.local_id == env.claims.claims.value("local_id", "") &&
            reg.owner == owner_id) {
          owns = true;
          break;
        }
      }
      break;
    }
  }
  if (!owns) return Error(Errc::NotOwner, "caller does not own this token");

  {
    std::lock_guard lock(mu_);
    revoked_.emplace(token_hash_hex, clock_());  // idempotent
  }
  (void)audit_.append(audit::EventKind::revoke, owner_id, {token_hash_hex},
                      std::nullopt, clock_());
  return ok_status();
}

Result<crypto::PublicKey> Provider::peer_key(const std::string& host,
                                             bool force_refresh) {
  auto peer_it = config_.federation_peers.find(host);
  if (peer_it == config_.federation_peers.end())
    return Error(Errc::UnknownPeer, "issuer '" + host + "' is not a federated peer");
  const FederationPeer& peer = peer_it->second;
  if (peer.pinned_key) return *peer.pinned_key;
  if (!peer.key_endpoint)
    return Error(Errc::UnknownPeer, "peer has neither pinned key nor key endpoint");

  std::int64_t now = clock_();
  {
    std::lock_guard lock(mu_);
    auto cached = peer_key_cache_.find(host);
    if (!force_refresh && cached != peer_key_cache_.end() &&
        now - cached->second.fetched_at < config_.peer_key_cache_ttl)
      return cached->second.key;
  }

  httplib::Client client(*peer.key_endpoint);
  client.set_connection_timeout(2);
  auto res = client.Get("/keys");
  if (!res || res->status != 200)
    return Error(Errc::PeerKeyFetchFailed, "GET /keys failed for " + host);
  nlohmann::json body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("public_key"))
    return Error(Errc::PeerKeyFetchFailed, "malformed key document from " + host);
  auto key = crypto::array_from_hex<crypto::kPublicKeyBytes>(
      body["public_key"].get<std::string>());
  if (!key) return Error(Errc::PeerKeyFetchFailed, "bad key encoding from " + host);
  {
    std::lock_guard lock(mu_);
    peer_key_cache_[host] = {*key, now};
  }
  return *key;
}

Result<tokens::ClaimSet> Provider::federation_verify(const tokens::TokenEnvelope& env) {
  const std::string& host = env.claims.issuer.host;
  if (host == config_.issuer_host) return verify_own_token(env);

  auto key = peer_key(host, false);
  if (!key.ok()) return key.error();
  auto claims = tokens::verify_token(env, key.value(), clock_(), config_.skew);
  if (claims.ok()) return claims;

  // a stale cached key can look like a bad signature; refetch once
  bool had_endpoint = config_.federation_peers.at(host).key_endpoint.has_value();
  if (claims.error().code == Errc::BadSignature && had_endpoint) {
    auto fresh = peer_key(host, true);
    if (!fresh.ok()) return fresh.error();
    return tokens::verify_token(env, fresh.value(), clock_(), config_.skew);
  }
  return claims.error();
}

void Provider::add_federation_peer(const std::string& host, FederationPeer peer) {
  std::lock_guard lock(mu_);
  config_.federation_peers[host] = std::move(peer);
}

std::vector<Registration> Provider::registrations() const {
  std::lock_guard lock(mu_);
  std::vector<Registration> out;
  for (const auto& [id, reg] : registrations_) out.push_back(reg);
  return out;
}

}  // namespace agentdel::provider
