#include "agentdel/harness.hpp"

#include <fstream>

#include "httplib.h"

#include "agentdel/cnl.hpp"

namespace agentdel::harness {

namespace {

std::string join_reasons(const std::vector<std::string>& reasons) {
  std::string out;
  for (const auto& r : reasons) {
    if (!out.empty()) out += ",";
    out += r;
  }
  return out.empty() ? "-" : out;
}

}  // namespace

ScenarioRunner::ScenarioRunner()
    : clock_(std::make_shared<std::atomic<std::int64_t>>(1700000000)) {}

ScenarioRunner::~ScenarioRunner() {
  for (auto& [id, inst] : providers_)
    if (inst.server) inst.server->stop();
}

crypto::KeyPair ScenarioRunner::next_keypair() {
  std::string material = seed_prefix_ + "#" + std::to_string(key_counter_++);
  auto digest = crypto::sha256(std::vector<std::uint8_t>(material.begin(), material.end()));
  return crypto::keypair_from_seed(digest);
}

Result<tokens::TokenEnvelope> ScenarioRunner::token(const std::string& handle) const {
  auto it = tokens_.find(handle);
  if (it == tokens_.end())
    return Error(Errc::ValidationError, "unknown token handle '" + handle + "'");
  return it->second;
}

Result<crypto::KeyPair> ScenarioRunner::key(const std::string& handle) const {
  auto it = keys_.find(handle);
  if (it == keys_.end())
    return Error(Errc::ValidationError, "unknown key handle '" + handle + "'");
  return it->second;
}

Result<policy::Policy> ScenarioRunner::policy_handle(const std::string& handle) const {
  auto it = policies_.find(handle);
  if (it == policies_.end())
    return Error(Errc::ValidationError, "unknown policy handle '" + handle + "'");
  return it->second;
}

Report ScenarioRunner::run_file(const std::string& path) {
  std::ifstream in(path);
  Report report;
  if (!in) {
    report.name = path;
    report.pass = false;
    report.transcript.push_back("cannot open scenario file " + path);
    return report;
  }
  nlohmann::json script = nlohmann::json::parse(in, nullptr, false);
  if (script.is_discarded()) {
    report.name = path;
    report.pass = false;
    report.transcript.push_back("scenario file is not valid JSON");
    return report;
  }
  return run(script);
}

Report ScenarioRunner::run(const nlohmann::json& script) {
  Report report;
  report.name = script.value("name", "unnamed");
  seed_prefix_ = report.name;
  clock_->store(script.value("clock", std::int64_t{1700000000}));

  std::size_t n = 0;
  for (const auto& s : script.value("steps", nlohmann::json::array())) {
    ++n;
    Status st = ok_status();
    try {
      st = step(s, report);
    } catch (const std::exception& e) {
      st = Error(Errc::ValidationError,
                 "step '" + s.value("op", "?") + "' threw: " + e.what());
    }
    if (!st.ok()) {
      report.pass = false;
      report.transcript.push_back("[step " + std::to_string(n) +
                                  "] ERROR: " + st.error().describe());
      break;
    }
  }
  return report;
}

Status ScenarioRunner::step(const nlohmann::json& s, Report& report) {
  const std::string op = s.value("op", "");
  auto note = [&](const std::string& line) {
    report.transcript.push_back("[" + op + "] " + line);
  };
  auto expect_fail = [&](const std::string& line) {
    report.pass = false;
    report.transcript.push_back("[" + op + "] EXPECT FAIL: " + line);
  };

  if (op == "provider") {
    std::string id = s.at("id");
    ProviderInstance inst;
    inst.host = s.at("host");
    provider::ProviderConfig cfg;
    cfg.issuer_host = inst.host;
    cfg.signing_key = next_keypair();
    cfg.key_id = inst.host + "/key1";
    cfg.pairwise_salt.assign(inst.host.begin(), inst.host.end());
    cfg.max_user_token_lifetime = s.value("max_lifetime", std::int64_t{86400});
    cfg.max_agent_token_lifetime = cfg.max_user_token_lifetime;
    auto authn = std::make_shared<provider::StaticAuthenticator>();
    const nlohmann::json users = s.value("users", nlohmann::json::object());
    for (const auto& [user, pw] : users.items())
      authn->add_user(user, pw.get<std::string>());
    auto clock = clock_;
    inst.provider = std::make_shared<provider::Provider>(
        cfg, authn, [clock] { return clock->load(); });
    inst.server = std::make_unique<provider::ProviderServer>(inst.provider);
    auto port = inst.server->start();
    if (!port.ok()) return port.error();
    note(id + " (" + inst.host + ") listening on " + inst.server->base_url());
    providers_[id] = std::move(inst);
    return ok_status();
  }

  if (op == "federate") {
    auto& prov = providers_.at(s.at("provider").get<std::string>());
    auto& peer = providers_.at(s.at("peer").get<std::string>());
    provider::FederationPeer federation;
    if (s.value("via", "pinned") == "endpoint")
      federation.key_endpoint = peer.server->base_url();
    else
      federation.pinned_key = peer.provider->public_key();
    prov.provider->add_federation_peer(peer.host, federation);
    note(prov.host + " now trusts " + peer.host);
    return ok_status();
  }

  if (op == "issue_user") {
    auto& prov = providers_.at(s.at("provider").get<std::string>());
    std::string key_handle = s.at("key");
    if (!keys_.count(key_handle)) keys_[key_handle] = next_keypair();
    nlohmann::json assertion = {{"username", s.at("username")},
                                {"password", s.at("password")}};
    auto env = prov.provider->issue_user_token(
        assertion, crypto::to_hex(keys_[key_handle].public_key),
        s.value("lifetime", std::int64_t{0}));
    if (s.contains("expect_error")) {
      if (env.ok() || errc_name(env.error().code) != s["expect_error"])
        expect_fail("wanted " + s["expect_error"].get<std::string>());
      else
        note("rejected with " + std::string(errc_name(env.error().code)));
      return ok_status();
    }
    if (!env.ok()) return env.error();
    tokens_[s.at("as")] = env.value();
    note("user token '" + s.at("as").get<std::string>() + "' issued");
    return ok_status();
  }

  if (op == "register_agent") {
    auto& prov = providers_.at(s.at("provider").get<std::string>());
    auto owner = token(s.at("owner"));
    if (!owner.ok()) return owner.error();
    nlohmann::json metadata = s.value("metadata", nlohmann::json::object());
    if (s.contains("local_id")) metadata["local_id"] = s["local_id"];
    if (s.contains("pairwise")) metadata["pairwise"] = s["pairwise"];
    if (s.contains("key")) {
      std::string key_handle = s["key"];
      if (!keys_.count(key_handle)) keys_[key_handle] = next_keypair();
      metadata["agent_key"] = crypto::to_hex(keys_[key_handle].public_key);
    }
    auto reg = prov.provider->register_agent(owner.value(), metadata);
    if (s.contains("expect_error")) {
      if (reg.ok() || errc_name(reg.error().code) != s["expect_error"])
        expect_fail("wanted " + s["expect_error"].get<std::string>());
      else
        note("rejected with " + std::string(errc_name(reg.error().code)));
      return ok_status();
    }
    if (!reg.ok()) return reg.error();
    registrations_[s.at("as")] = {s.at("provider"), reg.value().local_id,
                                  reg.value().client_secret};
    note("registration '" + s.at("as").get<std::string>() + "' = " +
         reg.value().local_id);
    return ok_status();
  }

  if (op == "issue_agent") {
    std::string reg_handle = s.at("registration");
    auto reg_it = registrations_.find(reg_handle);
    if (reg_it == registrations_.end())
      return Error(Errc::ValidationError, "unknown registration '" + reg_handle + "'");
    auto& prov = providers_.at(reg_it->second.provider_id);
    std::optional<std::string> audience;
    if (s.contains("audience")) audience = s["audience"].get<std::string>();
    std::string secret = s.value("wrong_secret", false) ? std::string("bogus")
                                                        : reg_it->second.client_secret;
    auto env = prov.provider->issue_agent_token(reg_it->second.local_id, secret, audience);
    if (s.contains("expect_error")) {
      if (env.ok() || errc_name(env.error().code) != s["expect_error"])
        expect_fail("wanted " + s["expect_error"].get<std::string>());
      else
        note("rejected with " + std::string(errc_name(env.error().code)));
      return ok_status();
    }
    if (!env.ok()) return env.error();
    tokens_[s.at("as")] = env.value();
    note("agent token '" + s.at("as").get<std::string>() + "' for " +
         env.value().claims.subject.str());
    return ok_status();
  }

  if (op == "policy") {
    auto p = policy::Policy::from_json(s.at("policy"));
    if (!p.ok()) return p.error();
    policies_[s.at("as")] = p.value();
    note("policy '" + s.at("as").get<std::string>() + "' loaded");
    return ok_status();
  }

  if (op == "policy_cnl") {
    auto catalog = cnl::ResourceCatalog::from_json(
        s.value("catalog", nlohmann::json::object()));
    if (!catalog.ok()) return catalog.error();
    cnl::CompileDefaults defaults;
    defaults.policy_id = s.value("policy_id", s.at("as").get<std::string>());
    std::optional<Error> parse_error;
    auto draft = cnl::compile_text(s.at("text"), catalog.value(), defaults, &parse_error);
    if (parse_error) return *parse_error;
    if (!draft.compiled)
      return Error(Errc::UnresolvedLabels,
                   "unresolved: " + join_reasons(draft.unresolved_labels));
    policies_[s.at("as")] = *draft.compiled;
    note("policy '" + s.at("as").get<std::string>() + "' compiled from CNL");
    return ok_status();
  }

  if (op == "delegate" || op == "redelegate") {
    auto user_env = token(s.at("user_token"));
    auto agent_env = token(s.at("agent_token"));
    auto pol = policy_handle(s.at("policy"));
    auto kp = key(s.at("key"));
    if (!user_env.ok()) return user_env.error();
    if (!agent_env.ok()) return agent_env.error();
    if (!pol.ok()) return pol.error();
    if (!kp.ok()) return kp.error();
    std::int64_t start = clock_->load() + s.value("start_offset", std::int64_t{0});
    std::int64_t end = clock_->load() + s.value("end_offset", std::int64_t{3600});
    tokens::DelegationExtras extras;
    if (s.contains("goal")) extras.goal_summary = s["goal"].get<std::string>();
    if (s.contains("audit_url")) extras.audit_url = s["audit_url"].get<std::string>();

    Result<tokens::TokenEnvelope> env = Error(Errc::ValidationError, "unreachable");
    if (op == "delegate") {
      env = tokens::build_delegation(user_env.value(), agent_env.value(), pol.value(),
                                     start, end, extras, kp.value().secret_key);
    } else {
      auto parent = token(s.at("parent"));
      auto delegating = token(s.at("delegating_agent"));
      if (!parent.ok()) return parent.error();
      if (!delegating.ok()) return delegating.error();
      env = tokens::build_redelegation(user_env.value(), agent_env.value(),
                                       parent.value(), delegating.value().claims.subject,
                                       pol.value(), start, end, extras,
                                       kp.value().secret_key);
    }
    if (!env.ok()) return env.error();
    tokens_[s.at("as")] = env.value();
    if (s.contains("record_at")) {
      auto& prov = providers_.at(s["record_at"].get<std::string>());
      auto recorded = prov.provider->record_delegation(env.value());
      if (!recorded.ok()) return recorded.error();
      note("recorded at " + prov.host + " as " + recorded.value().hex.substr(0, 12));
    }
    note("delegation '" + s.at("as").get<std::string>() + "' signed");
    return ok_status();
  }

  if (op == "verifier") {
    verifier::VerifierConfig cfg;
    for (const auto& pid : s.value("trust", nlohmann::json::array())) {
      auto& prov = providers_.at(pid.get<std::string>());
      cfg.trust.add(prov.provider->config().key_id, prov.provider->public_key(),
                    prov.host);
    }
    for (const auto& pid : s.value("introspect", nlohmann::json::array())) {
      auto& prov = providers_.at(pid.get<std::string>());
      cfg.introspection_urls[prov.host] = prov.server->base_url();
    }
    if (s.contains("caller")) {
      auto caller = token(s.at("caller"));
      if (!caller.ok()) return caller.error();
      cfg.introspection_caller = caller.value();
    }
    std::string approval = s.value("approval", "deny");
    cfg.approval = approval == "approve"
                       ? std::shared_ptr<verifier::ApprovalHandler>(
                             std::make_shared<verifier::AutoApproveHandler>())
                       : std::make_shared<verifier::AutoDenyHandler>();
    cfg.approval_timeout = std::chrono::milliseconds(
        s.value("approval_timeout_ms", std::int64_t{30000}));
    verifiers_[s.at("id")] = std::make_shared<verifier::Verifier>(cfg);
    note("verifier '" + s.at("id").get<std::string>() + "' configured");
    return ok_status();
  }

  if (op == "request") {
    auto v = verifiers_.find(s.at("verifier").get<std::string>());
    if (v == verifiers_.end())
      return Error(Errc::ValidationError, "unknown verifier");
    std::vector<tokens::TokenEnvelope> bundle;
    for (const auto& handle : s.at("bundle")) {
      auto env = token(handle.get<std::string>());
      if (!env.ok()) return env.error();
      bundle.push_back(env.value());
    }
    policy::AccessRequest req;
    req.resource = s.at("resource");
    auto action = policy::Action::parse(s.at("action").get<std::string>());
    if (!action.ok()) return action.error();
    req.action = action.value();
    if (s.contains("amount"))
      req.amount = policy::Money{s["amount"].at("value").get<std::int64_t>(),
                                 s["amount"].at("currency").get<std::string>()};
    if (s.contains("payload")) req.payload = s["payload"];
    req.timestamp = clock_->load();

    auto decision = v->second->authorize(bundle, req, clock_->load());
    std::string line = req.action.str() + " " + req.resource + " -> " +
                       policy::outcome_name(decision.outcome) + " (" +
                       join_reasons(decision.reasons) + ")";
    note(line);
    if (s.contains("expect") &&
        s["expect"].get<std::string>() != policy::outcome_name(decision.outcome))
      expect_fail("wanted " + s["expect"].get<std::string>() + ", got " + line);
    for (const auto& wanted : s.value("expect_reasons", nlohmann::json::array())) {
      if (std::find(decision.reasons.begin(), decision.reasons.end(),
                    wanted.get<std::string>()) == decision.reasons.end())
        expect_fail("missing reason " + wanted.get<std::string>() + " in " + line);
    }
    return ok_status();
  }

  if (op == "advance_clock") {
    clock_->fetch_add(s.at("seconds").get<std::int64_t>());
    note("clock now " + std::to_string(clock_->load()));
    return ok_status();
  }

  if (op == "revoke") {
    auto& prov = providers_.at(s.at("provider").get<std::string>());
    auto target = token(s.at("token"));
    auto owner = token(s.at("owner"));
    if (!target.ok()) return target.error();
    if (!owner.ok()) return owner.error();
    auto st = prov.provider->revoke(tokens::token_hash(target.value()).hex, owner.value());
    if (s.contains("expect_error")) {
      if (st.ok() || errc_name(st.error().code) != s["expect_error"])
        expect_fail("wanted " + s["expect_error"].get<std::string>());
      else
        note("rejected with " + std::string(errc_name(st.error().code)));
      return ok_status();
    }
    if (!st.ok()) return st.error();
    note("revoked " + s.at("token").get<std::string>());
    return ok_status();
  }

  if (op == "introspect") {
    auto& prov = providers_.at(s.at("provider").get<std::string>());
    auto target = token(s.at("token"));
    auto caller = token(s.at("caller"));
    if (!target.ok()) return target.error();
    if (!caller.ok()) return caller.error();
    httplib::Client client(prov.server->base_url());
    nlohmann::json body = {{"token_hash", tokens::token_hash(target.value()).hex},
                           {"caller_token", caller.value().encode()}};
    auto res = client.Post("/introspect", body.dump(), "application/json");
    if (!res) return Error(Errc::StorageFailure, "introspection request failed");
    if (s.contains("expect_error")) {
      nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
      std::string code = parsed.is_object() ? parsed.value("code", "") : "";
      if (res->status == 200 || code != s["expect_error"])
        expect_fail("wanted " + s["expect_error"].get<std::string>() + ", got " + code);
      else
        note("rejected with " + code);
      return ok_status();
    }
    if (res->status != 200)
      return Error(Errc::StorageFailure, "introspection returned " +
                                             std::to_string(res->status) + ": " + res->body);
    auto parsed = provider::IntrospectionResult::from_json(
        nlohmann::json::parse(res->body, nullptr, false));
    if (!parsed.ok()) return parsed.error();
    bool active = parsed.value().active;
    note(s.at("token").get<std::string>() + " active=" + (active ? "true" : "false"));
    if (s.contains("expect_active") && s["expect_active"].get<bool>() != active)
      expect_fail(std::string("wanted active=") +
                  (s["expect_active"].get<bool>() ? "true" : "false"));
    return ok_status();
  }

  if (op == "tamper") {
    auto env = token(s.at("token"));
    if (!env.ok()) return env.error();
    tokens::TokenEnvelope mutated = env.value();
    mutated.claims.claims["goal_summary"] = "tampered";
    tokens_[s.at("as")] = mutated;
    note("claims of '" + s.at("token").get<std::string>() + "' mutated into '" +
         s.at("as").get<std::string>() + "'");
    return ok_status();
  }

  if (op == "forge") {
    // re-sign the claims with an attacker key, optionally claiming the
    // original signer's key id
    auto env = token(s.at("like"));
    if (!env.ok()) return env.error();
    crypto::KeyPair attacker = next_keypair();
    std::string key_id = s.value("claim_key_id", true) ? env.value().signer_key_id
                                                       : "attacker/key1";
    tokens::ClaimSet claims = env.value().claims;
    if (s.contains("issuer_host")) {
      claims.issuer.host = s["issuer_host"].get<std::string>();
      claims.subject.host = claims.issuer.host;
      if (claims.claims.contains("global_id"))
        claims.claims["global_id"] = claims.subject.str();
      key_id = claims.issuer.host + "/key1";
    }
    auto forged = tokens::sign_token(claims, attacker.secret_key, key_id);
    if (!forged.ok()) return forged.error();
    tokens_[s.at("as")] = forged.value();
    note("forged '" + s.at("as").get<std::string>() + "' with untrusted key");
    return ok_status();
  }

  if (op == "expect_audit") {
    audit::Filter filter;
    if (s.contains("kind")) {
      auto kind = audit::event_kind_from_name(s["kind"].get<std::string>());
      if (!kind) return Error(Errc::ValidationError, "unknown audit kind");
      filter.event_kind = kind;
    }
    std::size_t count = 0;
    if (s.contains("verifier")) {
      count = verifiers_.at(s["verifier"].get<std::string>())->audit_log().query(filter).size();
    } else {
      count = providers_.at(s["provider"].get<std::string>())
                  .provider->audit_log().query(filter).size();
    }
    std::size_t wanted = s.at("count").get<std::size_t>();
    if (count != wanted)
      expect_fail("audit count " + std::to_string(count) + ", wanted " +
                  std::to_string(wanted));
    else
      note("audit count " + std::to_string(count) + " as expected");
    return ok_status();
  }

  return Error(Errc::ValidationError, "unknown scenario op '" + op + "'");
}

}  // namespace agentdel::harness
