#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "agentdel/error.hpp"
#include "json.hpp"

namespace agentdel::policy {

// Glob pattern over URIs: scheme, host (optionally "*." wildcard), and path
// segments where "*" matches exactly one segment and "**" (at most one per
// pattern) matches zero or more.
struct ResourcePattern {
  std::string scheme;
  std::string host_pattern;  // lowercased; may start with "*."
  std::vector<std::string> path_segments;

  std::string str() const;
  static Result<ResourcePattern> parse(const std::string& text);
  Status validate() const;
  bool operator==(const ResourcePattern&) const = default;
};

struct Uri {
  std::string scheme;
  std::string host;  // lowercased, may include :port; empty for file://
  std::vector<std::string> path_segments;

  std::string str() const;
  static Result<Uri> parse(const std::string& text);
};

enum class Verb { read, write, execute, purchase, message };

const char* verb_name(Verb v);
std::optional<Verb> verb_from_name(const std::string& name);

struct Action {
  Verb verb;
  std::optional<std::string> qualifier;  // required for execute, forbidden otherwise

  std::string str() const;  // "read" or "execute:ls"
  static Result<Action> parse(const std::string& text);
  Status validate() const;
  bool operator==(const Action&) const = default;
};

struct BudgetConstraint {
  std::int64_t limit = 0;  // minor currency units
  std::string currency;    // ISO-4217, 3 uppercase letters
  std::int64_t window_seconds = 0;
  bool operator==(const BudgetConstraint&) const = default;
};

struct RateConstraint {
  std::int64_t max_count = 0;
  std::int64_t window_seconds = 0;
  bool operator==(const RateConstraint&) const = default;
};

struct TimeWindowConstraint {
  std::int64_t start = 0;
  std::int64_t end = 0;
  bool operator==(const TimeWindowConstraint&) const = default;
};

struct SchemaConstraint {
  std::set<std::string> allowed_fields;      // dotted field paths
  std::set<std::string> allowed_predicates;  // e.g. "hasTitle"
  bool operator==(const SchemaConstraint&) const = default;
};

using Constraint = std::variant<BudgetConstraint, RateConstraint,
                                TimeWindowConstraint, SchemaConstraint>;

enum class Effect { permit, deny, require_approval };
const char* effect_name(Effect e);
std::optional<Effect> effect_from_name(const std::string& name);

struct Rule {
  Effect effect = Effect::deny;
  std::vector<ResourcePattern> resources;
  std::vector<Action> actions;
  std::vector<Constraint> constraints;
  bool operator==(const Rule&) const = default;
};

enum class DefaultEffect { deny, require_approval };

struct Policy {
  std::string policy_id;
  std::vector<Rule> rules;
  DefaultEffect default_effect = DefaultEffect::deny;

  nlohmann::json to_json() const;
  static Result<Policy> from_json(const nlohmann::json& j);
  Status validate() const;
  bool operator==(const Policy&) const = default;
};

struct Money {
  std::int64_t value = 0;  // minor units
  std::string currency;
  bool operator==(const Money&) const = default;
};

struct AccessRequest {
  std::string resource;  // concrete URI
  Action action;
  std::optional<Money> amount;          // present iff verb == purchase
  std::optional<nlohmann::json> payload;  // judged by Schema constraints
  std::int64_t timestamp = 0;

  nlohmann::json to_json() const;
  static Result<AccessRequest> from_json(const nlohmann::json& j);
  Status validate() const;
};

enum class Outcome { permit, deny, require_approval };
const char* outcome_name(Outcome o);
std::optional<Outcome> outcome_from_name(const std::string& name);

struct Decision {
  Outcome outcome = Outcome::deny;
  // one entry per policy in the evaluated chain; the matched rule index that
  // produced that policy's verdict, if any
  std::vector<std::optional<std::size_t>> matched_rule;
  std::vector<std::string> reasons;  // machine-readable codes

  nlohmann::json to_json() const;
};

// Cumulative Budget/Rate accounting, keyed per (policy_id, constraint index
// counted rule-major across the policy). Callers serialize access per chain.
struct UsageEntry {
  std::map<std::string, std::int64_t> spent;  // currency -> minor units
  std::int64_t count = 0;
  std::int64_t window_start = 0;
  bool started = false;
};

struct UsageState {
  std::map<std::string, UsageEntry> entries;

  static std::string key(const std::string& policy_id, std::size_t constraint_index);
};

bool match_pattern(const ResourcePattern& p, const Uri& uri);
Result<bool> match_pattern(const ResourcePattern& p, const std::string& uri);

// Deny-overrides, fail-closed. Matching deny rule wins; else a matching
// permit rule with all constraints holding permits; else a permit match whose
// constraints fail denies with the failing constraint's code; else a matching
// require_approval rule escalates; else the policy default applies.
Decision evaluate(const Policy& policy, const AccessRequest& req,
                  const UsageState& usage, std::int64_t now);

// Intersection semantics over a root-first chain: permit only if every policy
// permits; deny dominates require_approval.
Result<Decision> evaluate_chain(const std::vector<Policy>& policies,
                                const AccessRequest& req, const UsageState& usage,
                                std::int64_t now);

// Records spend/count for a permitted request against the matched rules'
// Budget/Rate constraints, rolling windows as they elapse.
void apply_usage(UsageState& usage, const std::vector<Policy>& policies,
                 const AccessRequest& req, const Decision& decision,
                 std::int64_t now);

bool check_schema(const SchemaConstraint& c, const nlohmann::json& payload);

// Exact language inclusion for this glob grammar: true iff every URI matched
// by b is matched by a.
bool pattern_subsumes(const ResourcePattern& a, const ResourcePattern& b);

// Conservative structural attenuation check: child's permits must be covered
// by parent permits (with constraints at least as strict) and parent's denies
// must be covered by child denies. May reject policies that are semantically
// attenuated but not structurally provable.
bool is_attenuation_of(const Policy& child, const Policy& parent);

}  // namespace agentdel::policy
