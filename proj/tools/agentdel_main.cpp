// agentdel — command-line front end over the delegation toolkit.
// Thin wrappers: JSON in on stdin, JSON out on stdout, diagnostics on stderr.
// Exit codes: 0 success / scenario pass, 1 operation or expectation failure,
// 2 usage error.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "agentdel/audit.hpp"
#include "agentdel/cnl.hpp"
#include "agentdel/crypto.hpp"
#include "agentdel/harness.hpp"
#include "agentdel/policy.hpp"
#include "agentdel/provider.hpp"
#include "agentdel/provider_http.hpp"
#include "agentdel/tokens.hpp"
#include "agentdel/verifier.hpp"
#include "agentdel/verifier_http.hpp"

namespace {

using nlohmann::json;
using namespace agentdel;

std::int64_t now_epoch() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int fail(const Error& e) {
  std::cerr << e.describe() << "\n";
  return 1;
}

json read_stdin_json() {
  std::ostringstream buf;
  buf << std::cin.rdbuf();
  return json::parse(buf.str(), nullptr, false);
}

Result<json> read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Error(Errc::StorageFailure, "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
    return Error(Errc::EncodingError, path + " is not valid JSON");
  return j;
}

Result<crypto::KeyPair> keypair_from_json(const json& j) {
  if (!j.is_object() || !j.contains("secret_key"))
    return Error(Errc::ValidationError, "expected {secret_key, public_key} hex");
  auto sk = crypto::array_from_hex<64>(j.at("secret_key").get<std::string>());
  if (!sk) return Error(Errc::ValidationError, "secret_key must be 64 bytes hex");
  crypto::KeyPair kp;
  kp.secret_key = *sk;
  kp.public_key = crypto::public_of(kp.secret_key);
  return kp;
}

int cmd_keygen(const std::string& seed_hex) {
  crypto::KeyPair kp;
  if (seed_hex.empty()) {
    kp = crypto::generate_keypair();
  } else {
    auto seed = crypto::array_from_hex<32>(seed_hex);
    if (!seed) return fail(Error(Errc::ValidationError, "seed must be 32 bytes hex"));
    kp = crypto::keypair_from_seed(*seed);
  }
  std::cout << json{{"public_key", crypto::to_hex(kp.public_key)},
                    {"secret_key", crypto::to_hex(kp.secret_key)}}
                   .dump(2)
            << "\n";
  return 0;
}

// issue-user / issue-agent / delegate read a JSON request body on stdin and
// print the signed token envelope (plus its wire encoding) on stdout.
int print_token(const tokens::TokenEnvelope& env) {
  json out = env.to_json();
  out["wire"] = env.encode();
  out["token_hash"] = tokens::token_hash(env).hex;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_issue_user() {
  json in = read_stdin_json();
  if (in.is_discarded()) return 2;
  auto kp = keypair_from_json(in.at("issuer_key"));
  if (!kp.ok()) return fail(kp.error());
  tokens::ClaimSet cs;
  cs.kind = tokens::TokenKind::user_id;
  auto issuer = tokens::GlobalId::parse(in.at("issuer").get<std::string>());
  auto subject = tokens::GlobalId::parse(in.at("subject").get<std::string>());
  if (!issuer.ok()) return fail(issuer.error());
  if (!subject.ok()) return fail(subject.error());
  cs.issuer = issuer.value();
  cs.subject = subject.value();
  cs.issued_at = in.value("issued_at", now_epoch());
  cs.expires_at = in.value("expires_at", cs.issued_at + 3600);
  cs.claims["user_key"] = in.at("user_key").get<std::string>();
  auto env = tokens::sign_token(cs, kp.value().secret_key,
                                in.at("key_id").get<std::string>());
  if (!env.ok()) return fail(env.error());
  return print_token(env.value());
}

int cmd_issue_agent() {
  json in = read_stdin_json();
  if (in.is_discarded()) return 2;
  auto kp = keypair_from_json(in.at("issuer_key"));
  if (!kp.ok()) return fail(kp.error());
  tokens::ClaimSet cs;
  cs.kind = tokens::TokenKind::agent_id;
  auto issuer = tokens::GlobalId::parse(in.at("issuer").get<std::string>());
  auto subject = tokens::GlobalId::parse(in.at("subject").get<std::string>());
  if (!issuer.ok()) return fail(issuer.error());
  if (!subject.ok()) return fail(subject.error());
  cs.issuer = issuer.value();
  cs.subject = subject.value();
  cs.issued_at = in.value("issued_at", now_epoch());
  cs.expires_at = in.value("expires_at", cs.issued_at + 3600);
  for (const char* field :
       {"local_id", "capabilities", "limitations", "pairwise"})
    cs.claims[field] = in.at(field);
  for (const char* field : {"model_descriptor", "agent_key"})
    if (in.contains(field)) cs.claims[field] = in[field];
  auto env = tokens::sign_token(cs, kp.value().secret_key,
                                in.at("key_id").get<std::string>());
  if (!env.ok()) return fail(env.error());
  return print_token(env.value());
}

int cmd_delegate() {
  json in = read_stdin_json();
  if (in.is_discarded()) return 2;
  auto user = tokens::TokenEnvelope::from_json(in.at("user_token"));
  auto agent = tokens::TokenEnvelope::from_json(in.at("agent_token"));
  auto pol = policy::Policy::from_json(in.at("policy"));
  auto kp = keypair_from_json(in.at("user_key"));
  if (!user.ok()) return fail(user.error());
  if (!agent.ok()) return fail(agent.error());
  if (!pol.ok()) return fail(pol.error());
  if (!kp.ok()) return fail(kp.error());
  tokens::DelegationExtras extras;
  if (in.contains("goal_summary"))
    extras.goal_summary = in["goal_summary"].get<std::string>();
  std::int64_t start = in.value("window_start", now_epoch());
  std::int64_t end = in.value("window_end", start + 3600);
  auto env = tokens::build_delegation(user.value(), agent.value(), pol.value(),
                                      start, end, extras, kp.value().secret_key);
  if (!env.ok()) return fail(env.error());
  return print_token(env.value());
}

int cmd_verify(const std::string& trust_path, std::int64_t now) {
  auto trust_json = read_json_file(trust_path);
  if (!trust_json.ok()) return fail(trust_json.error());
  auto trust = tokens::TrustStore::from_json(trust_json.value());
  if (!trust.ok()) return fail(trust.error());
  json in = read_stdin_json();
  if (in.is_discarded() || !in.is_array()) {
    std::cerr << "expected a JSON array of token envelopes on stdin\n";
    return 2;
  }
  std::vector<tokens::TokenEnvelope> bundle;
  for (const auto& t : in) {
    auto env = t.is_string() ? tokens::TokenEnvelope::decode(t.get<std::string>())
                             : tokens::TokenEnvelope::from_json(t);
    if (!env.ok()) return fail(env.error());
    bundle.push_back(env.value());
  }
  if (now == 0) now = now_epoch();
  auto verified = tokens::verify_delegation_chain(bundle, trust.value(), now);
  if (!verified.ok()) return fail(verified.error());
  std::cout << verified.value().to_json().dump(2) << "\n";
  return 0;
}

int cmd_evaluate() {
  json in = read_stdin_json();
  if (in.is_discarded()) return 2;
  std::vector<policy::Policy> policies;
  for (const auto& pj : in.at("policies")) {
    auto p = policy::Policy::from_json(pj);
    if (!p.ok()) return fail(p.error());
    policies.push_back(p.value());
  }
  auto req = policy::AccessRequest::from_json(in.at("request"));
  if (!req.ok()) return fail(req.error());
  policy::UsageState usage;
  std::int64_t now = in.value("now", req.value().timestamp);
  auto decision = policy::evaluate_chain(policies, req.value(), usage, now);
  if (!decision.ok()) return fail(decision.error());
  std::cout << decision.value().to_json().dump(2) << "\n";
  return 0;
}

int cmd_compile_scope(const std::string& catalog_path, bool render) {
  cnl::ResourceCatalog catalog;
  if (!catalog_path.empty()) {
    auto cj = read_json_file(catalog_path);
    if (!cj.ok()) return fail(cj.error());
    auto parsed = cnl::ResourceCatalog::from_json(cj.value());
    if (!parsed.ok()) return fail(parsed.error());
    catalog = parsed.value();
  }
  std::ostringstream buf;
  buf << std::cin.rdbuf();
  std::optional<Error> parse_error;
  auto draft = cnl::compile_text(buf.str(), catalog, {}, &parse_error);
  if (parse_error) return fail(*parse_error);
  if (render) {
    cnl::RenderOptions opts;
    opts.catalog = &catalog;
    auto text = cnl::render_for_review(draft, opts);
    if (!text.ok()) return fail(text.error());
    std::cout << text.value();
    return 0;
  }
  json out;
  out["unresolved_labels"] = draft.unresolved_labels;
  if (draft.compiled) {
    out["policy"] = draft.compiled->to_json();
    out["draft_hash"] = cnl::policy_hash(*draft.compiled).hex;
  }
  std::cout << out.dump(2) << "\n";
  return draft.compiled ? 0 : 1;
}

int cmd_approve() {
  json in = read_stdin_json();
  if (in.is_discarded()) return 2;
  auto pol = policy::Policy::from_json(in.at("policy"));
  auto kp = keypair_from_json(in.at("approver_key"));
  auto approver = tokens::GlobalId::parse(in.at("approver").get<std::string>());
  if (!pol.ok()) return fail(pol.error());
  if (!kp.ok()) return fail(kp.error());
  if (!approver.ok()) return fail(approver.error());
  cnl::PolicyDraft draft;
  draft.compiled = pol.value();
  auto approval = cnl::approve(draft, kp.value().secret_key, approver.value(),
                               in.value("approved_at", now_epoch()));
  if (!approval.ok()) return fail(approval.error());
  std::cout << approval.value().to_json().dump(2) << "\n";
  return 0;
}

int cmd_serve(const std::string& config_path, int port) {
  auto cj = read_json_file(config_path);
  if (!cj.ok()) return fail(cj.error());
  const json& cfg_json = cj.value();
  provider::ProviderConfig cfg;
  cfg.issuer_host = cfg_json.at("issuer_host");
  cfg.key_id = cfg_json.value("key_id", cfg.issuer_host + "/key1");
  auto kp = keypair_from_json(cfg_json.at("signing_key"));
  if (!kp.ok()) return fail(kp.error());
  cfg.signing_key = kp.value();
  std::string salt = cfg_json.value("pairwise_salt", cfg.issuer_host);
  cfg.pairwise_salt.assign(salt.begin(), salt.end());
  auto authn = std::make_shared<provider::StaticAuthenticator>();
  const json users = cfg_json.value("users", json::object());
  for (const auto& [user, pw] : users.items())
    authn->add_user(user, pw.get<std::string>());
  auto prov = std::make_shared<provider::Provider>(cfg, authn, now_epoch);
  provider::ProviderServer server(prov);
  auto bound = server.start("127.0.0.1", port);
  if (!bound.ok()) return fail(bound.error());
  std::cout << server.base_url() << "\n" << std::flush;
  server.wait();
  return 0;
}

int cmd_audit_verify(const std::string& path) {
  auto records = audit::load_records(path);
  if (!records.ok()) return fail(records.error());
  auto broken = audit::verify_chain(records.value());
  json out = {{"records", records.value().size()},
              {"intact", !broken.has_value()}};
  if (broken) out["first_broken"] = *broken;
  std::cout << out.dump(2) << "\n";
  return broken ? 1 : 0;
}

int cmd_audit_query(const std::string& path, const std::string& filter_json) {
  auto records = audit::load_records(path);
  if (!records.ok()) return fail(records.error());
  audit::Filter filter;
  if (!filter_json.empty()) {
    json fj = json::parse(filter_json, nullptr, false);
    if (fj.is_discarded()) return 2;
    auto parsed = audit::Filter::from_json(fj);
    if (!parsed.ok()) return fail(parsed.error());
    filter = parsed.value();
  }
  json out = json::array();
  for (const auto& r : records.value())
    if (filter.matches(r)) out.push_back(r.to_json());
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_scenario(const std::string& name, const std::string& dir) {
  std::string path = name;
  if (path.find('/') == std::string::npos && path.find(".json") == std::string::npos)
    path = dir + "/" + name + ".json";
  harness::ScenarioRunner runner;
  auto report = runner.run_file(path);
  for (const auto& line : report.transcript) std::cout << line << "\n";
  std::cout << (report.pass ? "PASS " : "FAIL ") << report.name << "\n";
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"authenticated delegation toolkit"};
  app.require_subcommand(1);

  std::string seed_hex;
  auto* keygen = app.add_subcommand("keygen", "generate an Ed25519 keypair");
  keygen->add_option("--seed", seed_hex, "32-byte hex seed for deterministic keys");

  auto* issue_user = app.add_subcommand("issue-user", "sign a user ID token");
  auto* issue_agent = app.add_subcommand("issue-agent", "sign an agent ID token");
  auto* delegate = app.add_subcommand("delegate", "sign a delegation token");

  std::string trust_path;
  std::int64_t verify_now = 0;
  auto* verify = app.add_subcommand("verify", "verify a delegation chain");
  verify->add_option("--trust", trust_path, "trust store JSON")->required();
  verify->add_option("--now", verify_now, "epoch seconds (default: wall clock)");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate policies against a request");

  std::string catalog_path;
  bool render = false;
  auto* compile = app.add_subcommand("compile-scope", "compile CNL scope text");
  compile->add_option("--catalog", catalog_path, "resource catalog JSON");
  compile->add_flag("--render", render, "print the human-review rendering");

  auto* approve = app.add_subcommand("approve", "sign an approval over a policy");

  std::string serve_config;
  int serve_port = 0;
  auto* serve = app.add_subcommand("serve", "run a provider service");
  serve->add_option("--config", serve_config, "provider config JSON")->required();
  serve->add_option("--port", serve_port, "listen port (0 = ephemeral)");

  auto* audit_cmd = app.add_subcommand("audit", "inspect an audit log");
  std::string audit_path, audit_filter;
  auto* audit_verify = audit_cmd->add_subcommand("verify", "check hash-chain integrity");
  audit_verify->add_option("path", audit_path, "NDJSON log file")->required();
  auto* audit_query = audit_cmd->add_subcommand("query", "filter records");
  audit_query->add_option("path", audit_path, "NDJSON log file")->required();
  audit_query->add_option("--filter", audit_filter, "filter JSON");
  audit_cmd->require_subcommand(1);

  std::string scenario_name, scenario_dir = "scenarios";
  auto* scenario = app.add_subcommand("scenario", "run an end-to-end scenario");
  scenario->add_option("name", scenario_name, "scenario name or script path")->required();
  scenario->add_option("--dir", scenario_dir, "scenario script directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (keygen->parsed()) return cmd_keygen(seed_hex);
  if (issue_user->parsed()) return cmd_issue_user();
  if (issue_agent->parsed()) return cmd_issue_agent();
  if (delegate->parsed()) return cmd_delegate();
  if (verify->parsed()) return cmd_verify(trust_path, verify_now);
  if (evaluate->parsed()) return cmd_evaluate();
  if (compile->parsed()) return cmd_compile_scope(catalog_path, render);
  if (approve->parsed()) return cmd_approve();
  if (serve->parsed()) return cmd_serve(serve_config, serve_port);
  if (audit_verify->parsed()) return cmd_audit_verify(audit_path);
  if (audit_query->parsed()) return cmd_audit_query(audit_path, audit_filter);
  if (scenario->parsed()) return cmd_scenario(scenario_name, scenario_dir);
  return 2;
}
