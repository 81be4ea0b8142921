#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agentdel/crypto.hpp"
#include "agentdel/error.hpp"
#include "agentdel/policy.hpp"
#include "agentdel/tokens.hpp"
#include "json.hpp"

namespace agentdel::cnl {

// One parsed permission sentence, e.g.
//   allow purchase on travelSites limit 500.00 USD per day.
struct CnlStatement {
  policy::Effect effect = policy::Effect::deny;
  bool all_actions = false;
  std::vector<policy::Action> actions;  // empty iff all_actions
  bool resource_is_label = false;
  std::string resource;  // label text, or a literal pattern string
  std::vector<policy::Constraint> constraints;
};

struct ParsePosition {
  int line = 1;
  int column = 1;
};

// Named resource labels resolved at compile time; keys are case-insensitive.
class ResourceCatalog {
 public:
  Status add(const std::string& label, std::vector<policy::ResourcePattern> patterns);
  std::optional<std::vector<policy::ResourcePattern>> lookup(const std::string& label) const;
  const std::map<std::string, std::vector<policy::ResourcePattern>>& entries() const {
    return entries_;
  }

  nlohmann::json to_json() const;
  static Result<ResourceCatalog> from_json(const nlohmann::json& j);

 private:
  std::map<std::string, std::vector<policy::ResourcePattern>> entries_;  // lowercased keys
  std::map<std::string, std::string> display_;  // lowercased -> original spelling
};

struct CompileDefaults {
  std::string policy_id = "cnl-policy";
  policy::DefaultEffect default_effect = policy::DefaultEffect::deny;
};

struct PolicyDraft {
  std::vector<CnlStatement> statements;
  std::optional<policy::Policy> compiled;  // present iff unresolved_labels empty
  std::string source_text;
  std::vector<std::string> unresolved_labels;
};

struct Approval {
  tokens::GlobalId approver;
  tokens::HashRef draft_hash;  // over the compiled policy's canonical bytes
  std::int64_t approved_at = 0;
  crypto::Signature signature{};

  nlohmann::json to_json() const;
  static Result<Approval> from_json(const nlohmann::json& j);
};

// Errors carry the first offending token's position in the message as
// "line L, col C".
Result<std::vector<CnlStatement>> parse_cnl(const std::string& text);

PolicyDraft compile(const std::vector<CnlStatement>& statements,
                    const ResourceCatalog& catalog,
                    const CompileDefaults& defaults);

PolicyDraft compile_text(const std::string& text, const ResourceCatalog& catalog,
                         const CompileDefaults& defaults,
                         std::optional<Error>* parse_error = nullptr);

tokens::HashRef policy_hash(const policy::Policy& policy);

struct RenderOptions {
  // warn when a rule pattern covers more than this many catalog entries
  std::size_t broad_match_threshold = 5;
  const ResourceCatalog* catalog = nullptr;
};

Result<std::string> render_for_review(const PolicyDraft& draft,
                                      const RenderOptions& opts = {});

Result<Approval> approve(const PolicyDraft& draft, const crypto::SecretKey& approver_key,
                         const tokens::GlobalId& approver_id, std::int64_t now);

bool verify_approval(const Approval& approval, const crypto::PublicKey& approver_key,
                     const policy::Policy& activated_policy);

// Boundary for plugging in free-text translation; the shipped implementation
// is the identity (input must already be CNL).
class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string translate_freeform(const std::string& text) = 0;
};

class IdentityTranslator : public Translator {
 public:
  std::string translate_freeform(const std::string& text) override { return text; }
};

}  // namespace agentdel::cnl
