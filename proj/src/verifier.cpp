#include "agentdel/verifier.hpp"

#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "agentdel/provider.hpp"

namespace agentdel::verifier {

bool CliPromptHandler::approve(const policy::AccessRequest& req,
                               const tokens::VerifiedDelegation& delegation) {
  std::cout << "Approval requested: agent " << delegation.agent.global_id.str()
            << " wants " << req.action.str() << " on " << req.resource
            << ". Allow? [y/N] " << std::flush;
  std::string line;
  if (!std::getline(std::cin, line)) return false;
  return line == "y" || line == "Y" || line == "yes";
}

Verifier::Verifier(VerifierConfig config) : config_(std::move(config)) {}

policy::Decision Verifier::deny_with(const std::string& reason) const {
  policy::Decision d;
  d.outcome = policy::Outcome::deny;
  d.reasons = {reason};
  return d;
}

namespace {

// root delegation = the one without a parent ref
const tokens::TokenEnvelope* find_root_delegation(
    const std::vector<tokens::TokenEnvelope>& bundle) {
  for (const auto& env : bundle) {
    if (env.claims.kind != tokens::TokenKind::delegation) continue;
    if (!env.claims.claims.contains("parent_delegation_ref")) return &env;
  }
  return nullptr;
}

bool run_with_timeout(const std::shared_ptr<ApprovalHandler>& handler,
                      const policy::AccessRequest& req,
                      const tokens::VerifiedDelegation& delegation,
                      std::chrono::milliseconds timeout, bool& approved) {
  auto prom = std::make_shared<std::promise<bool>>();
  auto fut = prom->get_future();
  std::thread([prom, handler, req, delegation] {
    try {
      prom->set_value(handler->approve(req, delegation));
    } catch (...) {
      try {
        prom->set_value(false);
      } catch (...) {
      }
    }
  }).detach();
  if (fut.wait_for(timeout) != std::future_status::ready) return false;
  approved = fut.get();
  return true;
}

}  // namespace

policy::Decision Verifier::authorize(const std::vector<tokens::TokenEnvelope>& bundle,
                                     const policy::AccessRequest& req,
                                     std::int64_t now) {
  policy::Decision out;
  std::string actor = "unknown";
  std::vector<std::string> refs;
  for (const auto& env : bundle) refs.push_back(tokens::token_hash(env).hex);

  auto verified = tokens::verify_delegation_chain(bundle, config_.trust, now,
                                                  config_.skew, config_.max_chain_depth);
  if (!verified.ok()) {
    out = deny_with(errc_name(verified.error().code));
  } else {
    const tokens::VerifiedDelegation& v = verified.value();
    actor = v.agent.global_id.str();

    // revocation check by introspection, when configured for this issuer
    bool introspection_denied = false;
    const tokens::TokenEnvelope* root = find_root_delegation(bundle);
    if (root) {
      auto url = config_.introspection_urls.find(root->claims.issuer.host);
      if (url == config_.introspection_urls.end()) {
        // delegations are recorded at the user's provider
        for (const auto& env : bundle)
          if (env.claims.kind == tokens::TokenKind::user_id)
            url = config_.introspection_urls.find(env.claims.issuer.host);
      }
      if (url != config_.introspection_urls.end()) {
        if (!config_.introspection_caller) {
          out = deny_with("IntrospectionUnavailable");
          introspection_denied = true;
        } else {
          httplib::Client client(url->second);
          client.set_connection_timeout(2);
          nlohmann::json body = {
              {"token_hash", tokens::token_hash(*root).hex},
              {"caller_token", config_.introspection_caller->encode()}};
          auto res = client.Post("/introspect", body.dump(), "application/json");
          if (!res || res->status != 200) {
            out = deny_with("IntrospectionUnavailable");
            introspection_denied = true;
          } else {
            auto parsed = provider::IntrospectionResult::from_json(
                nlohmann::json::parse(res->body, nullptr, false));
            if (!parsed.ok() || !parsed.value().active) {
              out = deny_with(parsed.ok() && parsed.value().revoked ? "Revoked"
                                                                    : "Inactive");
              introspection_denied = true;
            }
          }
        }
      }
    }

    if (!introspection_denied) {
      std::lock_guard lock(mu_);
      auto decision = policy::evaluate_chain(v.effective_policies, req, usage_, now);
      if (!decision.ok()) {
        out = deny_with(errc_name(decision.error().code));
      } else {
        out = decision.value();
        if (out.outcome == policy::Outcome::require_approval) {
          bool approved = false;
          if (!run_with_timeout(config_.approval, req, v, config_.approval_timeout,
                                approved)) {
            out.outcome = policy::Outcome::deny;
            out.reasons.push_back("ApprovalTimeout");
          } else if (approved) {
            out.outcome = policy::Outcome::permit;
            out.reasons.push_back("ApprovedByHuman");
          } else {
            out.outcome = policy::Outcome::deny;
            out.reasons.push_back("ApprovalRejected");
          }
        }
        policy::apply_usage(usage_, v.effective_policies, req, out, now);
      }
    }
  }

  (void)audit_.append(audit::EventKind::authorize, actor, refs, out.to_json(), now);
  return out;
}

// ---------------------------------------------------------------------------
// robots.txt

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  auto end = s.find_last_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  return s.substr(begin, end - begin + 1);
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

bool AgentDirectives::disallows(const std::string& path) const {
  for (const auto& prefix : disallowed_paths)
    if (path.rfind(prefix, 0) == 0) return true;
  return false;
}

AgentDirectives parse_agent_directives(const std::string& robots_txt) {
  AgentDirectives out;
  std::istringstream in(robots_txt);
  std::string line;
  bool in_group = false;       // currently inside a group that names AgentBot
  bool reading_agents = true;  // still collecting consecutive User-agent lines
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;  // malformed, ignored
    std::string field = lowercase(trim(line.substr(0, colon)));
    std::string value = trim(line.substr(colon + 1));

    if (field == "user-agent") {
      if (!reading_agents) {
        // a new group starts
        in_group = false;
        reading_agents = true;
      }
      if (lowercase(value) == "agentbot") in_group = true;
      continue;
    }
    reading_agents = false;
    if (!in_group) continue;
    if (field == "disallow") {
      if (!value.empty() && value[0] == '/') out.disallowed_paths.push_back(value);
    } else if (field == "agent-interface") {
      if (!value.empty() && value[0] == '/') out.agent_interface_path = value;
    }
    // other fields ignored, per robots.txt convention
  }
  return out;
}

RoutedRequest route_outbound(const policy::AccessRequest& req,
                             const AgentDirectives& directives) {
  RoutedRequest out;
  out.request = req;
  auto uri = policy::Uri::parse(req.resource);
  if (!uri.ok()) {
    out.flag = "MalformedResource";
    return out;
  }
  std::string path = "/";
  for (std::size_t i = 0; i < uri.value().path_segments.size(); ++i) {
    path += uri.value().path_segments[i];
    if (i + 1 < uri.value().path_segments.size()) path += "/";
  }
  if (!directives.disallows(path)) return out;
  if (directives.agent_interface_path) {
    out.request.resource =
        uri.value().scheme + "://" + uri.value().host + *directives.agent_interface_path;
    out.rewritten = true;
  } else {
    out.flag = "RobotsDisallowed";
  }
  return out;
}

}  // namespace agentdel::verifier
