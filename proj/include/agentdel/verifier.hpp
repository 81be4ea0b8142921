#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "agentdel/audit.hpp"
#include "agentdel/policy.hpp"
#include "agentdel/tokens.hpp"

namespace agentdel::verifier {

// Escalation hook for require_approval outcomes. Implementations may block;
// the verifier bounds them with a timeout.
class ApprovalHandler {
 public:
  virtual ~ApprovalHandler() = default;
  virtual bool approve(const policy::AccessRequest& req,
                       const tokens::VerifiedDelegation& delegation) = 0;
};

class AutoDenyHandler : public ApprovalHandler {
 public:
  bool approve(const policy::AccessRequest&, const tokens::VerifiedDelegation&) override {
    return false;
  }
};

class AutoApproveHandler : public ApprovalHandler {
 public:
  bool approve(const policy::AccessRequest&, const tokens::VerifiedDelegation&) override {
    return true;
  }
};

// interactive y/n prompt on stdin, for the CLI
class CliPromptHandler : public ApprovalHandler {
 public:
  bool approve(const policy::AccessRequest& req,
               const tokens::VerifiedDelegation& delegation) override;
};

struct VerifierConfig {
  tokens::TrustStore trust;
  // issuer host -> provider base URL; when set, the delegation's revocation
  // status is checked by introspection before policy evaluation
  std::map<std::string, std::string> introspection_urls;
  std::optional<tokens::TokenEnvelope> introspection_caller;  // credential for /introspect
  std::shared_ptr<ApprovalHandler> approval = std::make_shared<AutoDenyHandler>();
  std::chrono::milliseconds approval_timeout{30000};
  std::int64_t skew = tokens::kDefaultSkewSeconds;
  std::size_t max_chain_depth = tokens::kDefaultMaxChainDepth;
};

// Resource-server enforcement point: chain verification, policy evaluation,
// approval escalation, usage accounting and audit trail, as one total
// decision function. Verification failures surface as deny Decisions.
class Verifier {
 public:
  explicit Verifier(VerifierConfig config);

  policy::Decision authorize(const std::vector<tokens::TokenEnvelope>& bundle,
                             const policy::AccessRequest& req, std::int64_t now);

  const audit::AuditLog& audit_log() const { return audit_; }
  const policy::UsageState& usage() const { return usage_; }

 private:
  policy::Decision deny_with(const std::string& reason) const;

  VerifierConfig config_;
  std::mutex mu_;  // serializes usage updates
  policy::UsageState usage_;
  audit::AuditLog audit_;
};

// robots.txt interpretation for the agent-specific user-agent group
struct AgentDirectives {
  std::vector<std::string> disallowed_paths;  // absolute paths
  std::optional<std::string> agent_interface_path;

  bool disallows(const std::string& path) const;
};

AgentDirectives parse_agent_directives(const std::string& robots_txt);

struct RoutedRequest {
  policy::AccessRequest request;
  bool rewritten = false;
  std::optional<std::string> flag;  // "RobotsDisallowed" when blocked with no interface
};

RoutedRequest route_outbound(const policy::AccessRequest& req,
                             const AgentDirectives& directives);

}  // namespace agentdel::verifier
