#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <memory>

#include "httplib.h"

#include "agentdel/provider_http.hpp"
#include "agentdel/verifier_http.hpp"
#include "helpers.hpp"

using namespace agentdel;
using nlohmann::json;
using testutil::kNow;

namespace {

struct Server {
  std::int64_t now = kNow;
  crypto::KeyPair provider_key = testutil::seeded_key("http-op1");
  crypto::KeyPair user_key = testutil::seeded_key("http-alice");
  std::shared_ptr<provider::Provider> op;
  std::unique_ptr<provider::ProviderServer> srv;
  std::unique_ptr<httplib::Client> client;

  Server(const std::string& host = "op1.example") {
    auto authn = std::make_shared<provider::StaticAuthenticator>();
    authn->add_user("alice", "hunter2");
    provider::ProviderConfig cfg;
    cfg.issuer_host = host;
    cfg.signing_key = provider_key;
    cfg.key_id = host + "/key1";
    cfg.pairwise_salt = {0x42};
    op = std::make_shared<provider::Provider>(cfg, authn, [this] { return now; });
    srv = std::make_unique<provider::ProviderServer>(op);
    auto port = srv->start();
    REQUIRE(port.ok());
    client = std::make_unique<httplib::Client>(srv->base_url());
  }

  json post(const std::string& path, const json& body, int expect_status) {
    auto res = client->Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == expect_status);
    auto parsed = json::parse(res->body, nullptr, false);
    REQUIRE_FALSE(parsed.is_discarded());
    return parsed;
  }

  std::string user_token() {
    auto out = post("/token/user",
                    json{{"assertion", {{"username", "alice"},
                                        {"password", "hunter2"}}},
                         {"user_key", crypto::to_hex(user_key.public_key)}},
                    200);
    REQUIRE(out.contains("token"));
    return out["token"];
  }
};

}  // namespace

TEST_CASE("health and keys endpoints answer") {
  Server s;
  auto health = s.client->Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");

  auto keys = s.client->Get("/keys");
  REQUIRE(keys);
  CHECK(keys->status == 200);
  auto body = json::parse(keys->body);
  CHECK(body["key_id"] == "op1.example/key1");
  CHECK(body["public_key"] == crypto::to_hex(s.provider_key.public_key));
}

TEST_CASE("user token endpoint issues verifiable tokens over the wire") {
  Server s;
  auto wire = s.user_token();
  auto env = tokens::TokenEnvelope::decode(wire);
  REQUIRE(env.ok());
  CHECK(tokens::verify_token(env.value(), s.provider_key.public_key, kNow, 60).ok());
  CHECK(env.value().claims.subject.str() == "user://op1.example/alice");

  SUBCASE("bad credentials get 401 with a stable error code") {
    auto err = s.post("/token/user",
                      json{{"assertion", {{"username", "alice"},
                                          {"password", "nope"}}},
                           {"user_key", crypto::to_hex(s.user_key.public_key)}},
                      401);
    CHECK(err["code"] == "AuthnFailed");
    CHECK(err.contains("message"));
  }
  SUBCASE("a malformed body gets 400") {
    auto res = s.client->Post("/token/user", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["code"] == "ValidationError");
  }
  SUBCASE("a non-object body gets 400") {
    auto res = s.client->Post("/token/user", "[1,2]", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
  }
}

TEST_CASE("registration and agent issuance work end to end over HTTP") {
  Server s;
  auto owner = s.user_token();

  auto reg = s.post("/register",
                    json{{"owner_token", owner},
                         {"metadata", {{"local_id", "helper"},
                                       {"capabilities", {"fetch"}}}}},
                    200);
  CHECK(reg["local_id"] == "helper");
  REQUIRE(reg.contains("client_secret"));

  auto tok = s.post("/token/agent",
                    json{{"local_id", "helper"},
                         {"client_secret", reg["client_secret"]}},
                    200);
  auto env = tokens::TokenEnvelope::decode(tok["token"].get<std::string>());
  REQUIRE(env.ok());
  CHECK(env.value().claims.subject.str() == "agent://op1.example/helper");

  SUBCASE("registering without a valid owner token gets 401") {
    auto err = s.post("/register",
                      json{{"owner_token", tok["token"]},
                           {"metadata", {{"local_id", "x"}}}},
                      401);
    CHECK(err["code"] == "InvalidOwnerToken");
  }
  SUBCASE("a wrong client secret gets 401") {
    auto err = s.post("/token/agent",
                      json{{"local_id", "helper"}, {"client_secret", "bogus"}},
                      401);
    CHECK(err["code"] == "BadClientSecret");
  }
  SUBCASE("a missing token field gets 400") {
    auto err = s.post("/register", json{{"metadata", json::object()}}, 400);
    CHECK(err["code"] == "ValidationError");
  }
}

TEST_CASE("delegation, introspection and revocation endpoints round-trip") {
  Server s;
  auto owner_wire = s.user_token();
  auto owner = tokens::TokenEnvelope::decode(owner_wire).value();

  auto reg = s.post("/register",
                    json{{"owner_token", owner_wire},
                         {"metadata", {{"local_id", "helper"}}}},
                    200);
  auto agent_wire = s.post("/token/agent",
                           json{{"local_id", "helper"},
                                {"client_secret", reg["client_secret"]}},
                           200)["token"]
                        .get<std::string>();
  auto agent = tokens::TokenEnvelope::decode(agent_wire).value();

  auto delegation = tokens::build_delegation(owner, agent,
                                             testutil::simple_policy(), kNow,
                                             kNow + 1800, {},
                                             s.user_key.secret_key)
                        .value();
  auto rec = s.post("/delegation", json{{"token", delegation.encode()}}, 200);
  CHECK(rec["hash"] == tokens::token_hash(delegation).hex);

  auto active = s.post("/introspect",
                       json{{"token_hash", rec["hash"]},
                            {"caller_token", agent_wire}},
                       200);
  CHECK(active["active"] == true);
  CHECK(active["revoked"] == false);

  SUBCASE("introspecting an unknown hash gets 404") {
    auto err = s.post("/introspect",
                      json{{"token_hash", std::string(64, 'f')},
                           {"caller_token", agent_wire}},
                      404);
    CHECK(err["code"] == "UnknownToken");
  }
  SUBCASE("introspection requires an agent caller") {
    auto err = s.post("/introspect",
                      json{{"token_hash", rec["hash"]},
                           {"caller_token", owner_wire}},
                      401);
    CHECK(err["code"] == "CallerUnauthenticated");
  }
  SUBCASE("revocation flips the introspection result") {
    auto ok = s.post("/revoke",
                     json{{"token_hash", rec["hash"]},
                          {"owner_token", owner_wire}},
                     200);
    CHECK(ok["revoked"] == true);
    auto after = s.post("/introspect",
                        json{{"token_hash", rec["hash"]},
                             {"caller_token", agent_wire}},
                        200);
    CHECK(after["active"] == false);
    CHECK(after["revoked"] == true);
  }
  SUBCASE("only the owner may revoke") {
    auto err = s.post("/revoke",
                      json{{"token_hash", rec["hash"]},
                           {"owner_token", agent_wire}},
                      401);
    CHECK(err["code"] == "NotOwner");
  }
  SUBCASE("recording a delegation over unknown tokens gets 404") {
    auto chain = testutil::make_chain();
    auto err = s.post("/delegation",
                      json{{"token", chain.delegation.encode()}}, 404);
    CHECK(err["code"] == "UnknownReferencedToken");
  }
}

TEST_CASE("two live providers federate key discovery over /keys") {
  Server op1("op1.example");
  Server op2("op2.example");
  op2.op->add_federation_peer("op1.example",
                              {std::nullopt, op1.srv->base_url()});

  auto owner = op1.user_token();
  auto reg = op1.post("/register",
                      json{{"owner_token", owner},
                           {"metadata", {{"local_id", "roamer"}}}},
                      200);
  auto roamer_wire = op1.post("/token/agent",
                              json{{"local_id", "roamer"},
                                   {"client_secret", reg["client_secret"]}},
                              200)["token"]
                         .get<std::string>();
  auto roamer = tokens::TokenEnvelope::decode(roamer_wire).value();

  // op2 fetches op1's key over HTTP to authenticate the foreign caller
  auto verified = op2.op->federation_verify(roamer);
  REQUIRE(verified.ok());
  CHECK(verified.value().subject.str() == "agent://op1.example/roamer");

  // and the foreign agent can authenticate an introspection call at op2
  auto owner2 = op2.user_token();
  auto reg2 = op2.post("/register",
                       json{{"owner_token", owner2},
                            {"metadata", {{"local_id", "local"}}}},
                       200);
  auto local_wire = op2.post("/token/agent",
                             json{{"local_id", "local"},
                                  {"client_secret", reg2["client_secret"]}},
                             200)["token"]
                        .get<std::string>();
  auto local_hash =
      tokens::token_hash(tokens::TokenEnvelope::decode(local_wire).value()).hex;
  auto res = op2.post("/introspect",
                      json{{"token_hash", local_hash},
                           {"caller_token", roamer_wire}},
                      200);
  CHECK(res["active"] == true);
}

TEST_CASE("the verifier server answers authorize requests") {
  auto chain = testutil::make_chain();
  verifier::VerifierConfig cfg;
  cfg.trust = chain.trust;
  auto v = std::make_shared<verifier::Verifier>(std::move(cfg));
  verifier::VerifierServer srv(v);
  auto port = srv.start();
  REQUIRE(port.ok());
  httplib::Client client(srv.base_url());

  json bundle = json::array({chain.user_tok.encode(), chain.agent_tok.encode(),
                             chain.delegation.encode()});
  json request = {{"resource", "https://files.example.org/doc.txt"},
                  {"action", "read"},
                  {"timestamp", kNow + 10}};

  auto res = client.Post(
      "/authorize",
      json{{"bundle", bundle}, {"request", request}, {"now", kNow + 10}}.dump(),
      "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto decision = json::parse(res->body);
  CHECK(decision["outcome"] == "permit");

  SUBCASE("denials still answer 200 with a deny decision") {
    json off_policy = {{"resource", "https://other.example/x"},
                       {"action", "read"},
                       {"timestamp", kNow + 10}};
    auto r2 = client.Post("/authorize",
                          json{{"bundle", bundle}, {"request", off_policy},
                               {"now", kNow + 10}}
                              .dump(),
                          "application/json");
    REQUIRE(r2);
    CHECK(r2->status == 200);
    CHECK(json::parse(r2->body)["outcome"] == "deny");
  }
  SUBCASE("an unparseable request body is a 400") {
    auto r2 = client.Post("/authorize", "{oops", "application/json");
    REQUIRE(r2);
    CHECK(r2->status == 400);
  }
  SUBCASE("a health endpoint is exposed") {
    auto r2 = client.Get("/health");
    REQUIRE(r2);
    CHECK(r2->status == 200);
  }
  SUBCASE("each HTTP authorize call is audited") {
    CHECK(v->audit_log().size() == 1);
    CHECK_FALSE(audit::verify_chain(v->audit_log().records()).has_value());
  }
}
