#include "agentdel/policy.hpp"

#include <algorithm>
#include <cctype>

namespace agentdel::policy {

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> segs;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) segs.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) segs.push_back(cur);
  return segs;
}

struct SchemeHostPath {
  std::string scheme, host, path;
};

Result<SchemeHostPath> split_uri(const std::string& text) {
  auto sep = text.find("://");
  if (sep == std::string::npos || sep == 0)
    return Error(Errc::ValidationError, "missing scheme in '" + text + "'");
  SchemeHostPath out;
  out.scheme = lowercase(text.substr(0, sep));
  std::string rest = text.substr(sep + 3);
  // ignore query and fragment
  auto cut = rest.find_first_of("?#");
  if (cut != std::string::npos) rest = rest.substr(0, cut);
  auto slash = rest.find('/');
  if (slash == std::string::npos) {
    out.host = rest;
  } else {
    out.host = rest.substr(0, slash);
    out.path = rest.substr(slash);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// names

const char* verb_name(Verb v) {
  switch (v) {
    case Verb::read: return "read";
    case Verb::write: return "write";
    case Verb::execute: return "execute";
    case Verb::purchase: return "purchase";
    case Verb::message: return "message";
  }
  return "?";
}

std::optional<Verb> verb_from_name(const std::string& name) {
  if (name == "read") return Verb::read;
  if (name == "write") return Verb::write;
  if (name == "execute") return Verb::execute;
  if (name == "purchase") return Verb::purchase;
  if (name == "message") return Verb::message;
  return std::nullopt;
}

const char* effect_name(Effect e) {
  switch (e) {
    case Effect::permit: return "permit";
    case Effect::deny: return "deny";
    case Effect::require_approval: return "require_approval";
  }
  return "?";
}

std::optional<Effect> effect_from_name(const std::string& name) {
  if (name == "permit") return Effect::permit;
  if (name == "deny") return Effect::deny;
  if (name == "require_approval") return Effect::require_approval;
  return std::nullopt;
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::permit: return "permit";
    case Outcome::deny: return "deny";
    case Outcome::require_approval: return "require_approval";
  }
  return "?";
}

std::optional<Outcome> outcome_from_name(const std::string& name) {
  if (name == "permit") return Outcome::permit;
  if (name == "deny") return Outcome::deny;
  if (name == "require_approval") return Outcome::require_approval;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// patterns and URIs

std::string ResourcePattern::str() const {
  std::string s = scheme + "://" + host_pattern;
  for (const auto& seg : path_segments) s += "/" + seg;
  return s;
}

Result<ResourcePattern> ResourcePattern::parse(const std::string& text) {
  auto parts = split_uri(text);
  if (!parts.ok()) return parts.error();
  ResourcePattern p;
  p.scheme = parts.value().scheme;
  p.host_pattern = lowercase(parts.value().host);
  p.path_segments = split_path(parts.value().path);
  auto st = p.validate();
  if (!st.ok()) return st.error();
  return p;
}

Status ResourcePattern::validate() const {
  if (scheme.empty()) return Error(Errc::ValidationError, "empty scheme");
  auto dd = std::count(path_segments.begin(), path_segments.end(), "**");
  if (dd > 1)
    return Error(Errc::ValidationError, "'**' may appear at most once");
  if (host_pattern.find('*') != std::string::npos &&
      host_pattern.rfind("*.", 0) != 0)
    return Error(Errc::ValidationError, "host wildcard must be a leading '*.'");
  return ok_status();
}

std::string Uri::str() const {
  std::string s = scheme + "://" + host;
  for (const auto& seg : path_segments) s += "/" + seg;
  return s;
}

Result<Uri> Uri::parse(const std::string& text) {
  auto parts = split_uri(text);
  if (!parts.ok()) return parts.error();
  Uri u;
  u.scheme = parts.value().scheme;
  u.host = lowercase(parts.value().host);
  if (u.host.find('*') != std::string::npos)
    return Error(Errc::ValidationError, "wildcard in concrete URI host");
  u.path_segments = split_path(parts.value().path);
  for (const auto& seg : u.path_segments)
    if (seg == "*" || seg == "**")
      return Error(Errc::ValidationError, "wildcard in concrete URI path");
  return u;
}

namespace {

bool host_matches(const std::string& pattern, const std::string& host) {
  if (pattern.rfind("*.", 0) == 0) {
    std::string base = pattern.substr(2);
    // at least one extra label required
    return ends_with(host, "." + base) && host.size() > base.size() + 1;
  }
  return pattern == host;
}

bool segments_match(const std::vector<std::string>& pat, std::size_t i,
                    const std::vector<std::string>& path, std::size_t j) {
  if (i == pat.size()) return j == path.size();
  if (pat[i] == "**") {
    if (segments_match(pat, i + 1, path, j)) return true;
    return j < path.size() && segments_match(pat, i, path, j + 1);
  }
  if (j >= path.size()) return false;
  if (pat[i] == "*" || pat[i] == path[j])
    return segments_match(pat, i + 1, path, j + 1);
  return false;
}

}  // namespace

bool match_pattern(const ResourcePattern& p, const Uri& uri) {
  return p.scheme == uri.scheme && host_matches(p.host_pattern, uri.host) &&
         segments_match(p.path_segments, 0, uri.path_segments, 0);
}

Result<bool> match_pattern(const ResourcePattern& p, const std::string& uri) {
  auto u = Uri::parse(uri);
  if (!u.ok()) return u.error();
  return match_pattern(p, u.value());
}

// ---------------------------------------------------------------------------
// actions

std::string Action::str() const {
  std::string s = verb_name(verb);
  if (qualifier) s += ":" + *qualifier;
  return s;
}

Result<Action> Action::parse(const std::string& text) {
  Action a;
  auto colon = text.find(':');
  std::string head = colon == std::string::npos ? text : text.substr(0, colon);
  auto v = verb_from_name(head);
  if (!v) return Error(Errc::ValidationError, "unknown verb '" + head + "'");
  a.verb = *v;
  if (colon != std::string::npos) a.qualifier = text.substr(colon + 1);
  auto st = a.validate();
  if (!st.ok()) return st.error();
  return a;
}

Status Action::validate() const {
  if (verb == Verb::execute && (!qualifier || qualifier->empty()))
    return Error(Errc::ValidationError, "execute requires a qualifier");
  if (verb != Verb::execute && qualifier)
    return Error(Errc::ValidationError, "qualifier only valid for execute");
  return ok_status();
}

namespace {

// rule action covering a requested action; "*" qualifier covers any command
bool action_covers(const Action& rule_action, const Action& req_action) {
  if (rule_action.verb != req_action.verb) return false;
  if (rule_action.verb != Verb::execute) return true;
  if (!rule_action.qualifier) return false;
  return *rule_action.qualifier == "*" ||
         (req_action.qualifier && *rule_action.qualifier == *req_action.qualifier);
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON forms

namespace {

nlohmann::json constraint_to_json(const Constraint& c) {
  nlohmann::json j;
  if (const auto* b = std::get_if<BudgetConstraint>(&c)) {
    j["type"] = "budget";
    j["limit"] = b->limit;
    j["currency"] = b->currency;
    j["window_seconds"] = b->window_seconds;
  } else if (const auto* r = std::get_if<RateConstraint>(&c)) {
    j["type"] = "rate";
    j["max_count"] = r->max_count;
    j["window_seconds"] = r->window_seconds;
  } else if (const auto* t = std::get_if<TimeWindowConstraint>(&c)) {
    j["type"] = "time_window";
    j["start"] = t->start;
    j["end"] = t->end;
  } else if (const auto* s = std::get_if<SchemaConstraint>(&c)) {
    j["type"] = "schema";
    j["allowed_fields"] = s->allowed_fields;
    j["allowed_predicates"] = s->allowed_predicates;
  }
  return j;
}

Result<Constraint> constraint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    return Error(Errc::ValidationError, "constraint missing type");
  std::string type = j["type"];
  try {
    if (type == "budget") {
      BudgetConstraint b;
      b.limit = j.at("limit").get<std::int64_t>();
      b.currency = j.at("currency").get<std::string>();
      b.window_seconds = j.at("window_seconds").get<std::int64_t>();
      if (b.limit <= 0 || b.window_seconds <= 0)
        return Error(Errc::ValidationError, "budget bounds must be positive");
      if (b.currency.size() != 3 ||
          !std::all_of(b.currency.begin(), b.currency.end(),
                       [](unsigned char c) { return std::isupper(c); }))
        return Error(Errc::ValidationError, "currency must be 3 uppercase letters");
      return Constraint(b);
    }
    if (type == "rate") {
      RateConstraint r;
      r.max_count = j.at("max_count").get<std::int64_t>();
      r.window_seconds = j.at("window_seconds").get<std::int64_t>();
      if (r.max_count <= 0 || r.window_seconds <= 0)
        return Error(Errc::ValidationError, "rate bounds must be positive");
      return Constraint(r);
    }
    if (type == "time_window") {
      TimeWindowConstraint t;
      t.start = j.at("start").get<std::int64_t>();
      t.end = j.at("end").get<std::int64_t>();
      if (t.end <= t.start)
        return Error(Errc::ValidationError, "time window end before start");
      return Constraint(t);
    }
    if (type == "schema") {
      SchemaConstraint s;
      for (const auto& f : j.at("allowed_fields"))
        s.allowed_fields.insert(f.get<std::string>());
      for (const auto& p : j.at("allowed_predicates"))
        s.allowed_predicates.insert(p.get<std::string>());
      return Constraint(s);
    }
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  return Error(Errc::ValidationError, "unknown constraint type '" + type + "'");
}

}  // namespace

nlohmann::json Policy::to_json() const {
  nlohmann::json j;
  j["policy_id"] = policy_id;
  j["default_effect"] =
      default_effect == DefaultEffect::deny ? "deny" : "require_approval";
  j["rules"] = nlohmann::json::array();
  for (const auto& rule : rules) {
    nlohmann::json rj;
    rj["effect"] = effect_name(rule.effect);
    rj["resources"] = nlohmann::json::array();
    for (const auto& p : rule.resources) rj["resources"].push_back(p.str());
    rj["actions"] = nlohmann::json::array();
    for (const auto& a : rule.actions) rj["actions"].push_back(a.str());
    rj["constraints"] = nlohmann::json::array();
    for (const auto& c : rule.constraints)
      rj["constraints"].push_back(constraint_to_json(c));
    j["rules"].push_back(rj);
  }
  return j;
}

Result<Policy> Policy::from_json(const nlohmann::json& j) {
  if (!j.is_object()) return Error(Errc::ValidationError, "policy must be an object");
  Policy p;
  try {
    p.policy_id = j.at("policy_id").get<std::string>();
    std::string de = j.value("default_effect", "deny");
    if (de == "deny")
      p.default_effect = DefaultEffect::deny;
    else if (de == "require_approval")
      p.default_effect = DefaultEffect::require_approval;
    else
      return Error(Errc::ValidationError, "default_effect must be deny or require_approval");
    for (const auto& rj : j.at("rules")) {
      Rule rule;
      auto eff = effect_from_name(rj.at("effect").get<std::string>());
      if (!eff) return Error(Errc::ValidationError, "unknown rule effect");
      rule.effect = *eff;
      for (const auto& rs : rj.at("resources")) {
        auto pat = ResourcePattern::parse(rs.get<std::string>());
        if (!pat.ok()) return pat.error();
        rule.resources.push_back(std::move(pat.value()));
      }
      for (const auto& as : rj.at("actions")) {
        auto act = Action::parse(as.get<std::string>());
        if (!act.ok()) return act.error();
        rule.actions.push_back(std::move(act.value()));
      }
      if (rj.contains("constraints")) {
        for (const auto& cj : rj["constraints"]) {
          auto c = constraint_from_json(cj);
          if (!c.ok()) return c.error();
          rule.constraints.push_back(std::move(c.value()));
        }
      }
      p.rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  auto st = p.validate();
  if (!st.ok()) return st.error();
  return p;
}

Status Policy::validate() const {
  if (policy_id.empty()) return Error(Errc::ValidationError, "empty policy_id");
  for (const auto& rule : rules) {
    if (rule.resources.empty() || rule.actions.empty())
      return Error(Errc::ValidationError, "rule needs resources and actions");
    for (const auto& p : rule.resources) {
      auto st = p.validate();
      if (!st.ok()) return st;
    }
    for (const auto& a : rule.actions) {
      auto st = a.validate();
      if (!st.ok()) return st;
    }
  }
  return ok_status();
}

nlohmann::json AccessRequest::to_json() const {
  nlohmann::json j;
  j["resource"] = resource;
  j["action"] = action.str();
  if (amount) {
    j["amount"] = {{"value", amount->value}, {"currency", amount->currency}};
  }
  if (payload) j["payload"] = *payload;
  j["timestamp"] = timestamp;
  return j;
}

Result<AccessRequest> AccessRequest::from_json(const nlohmann::json& j) {
  AccessRequest req;
  try {
    req.resource = j.at("resource").get<std::string>();
    auto act = Action::parse(j.at("action").get<std::string>());
    if (!act.ok()) return act.error();
    req.action = act.value();
    if (j.contains("amount")) {
      Money m;
      m.value = j["amount"].at("value").get<std::int64_t>();
      m.currency = j["amount"].at("currency").get<std::string>();
      req.amount = m;
    }
    if (j.contains("payload")) req.payload = j["payload"];
    req.timestamp = j.value("timestamp", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  auto st = req.validate();
  if (!st.ok()) return st.error();
  return req;
}

Status AccessRequest::validate() const {
  auto st = action.validate();
  if (!st.ok()) return st;
  if ((action.verb == Verb::purchase) != amount.has_value())
    return Error(Errc::ValidationError, "amount present iff action is purchase");
  if (amount && amount->value <= 0)
    return Error(Errc::ValidationError, "amount must be positive");
  return ok_status();
}

nlohmann::json Decision::to_json() const {
  nlohmann::json j;
  j["outcome"] = outcome_name(outcome);
  j["matched_rule"] = nlohmann::json::array();
  for (const auto& m : matched_rule) {
    if (m)
      j["matched_rule"].push_back(static_cast<std::int64_t>(*m));
    else
      j["matched_rule"].push_back(nullptr);
  }
  j["reasons"] = reasons;
  return j;
}

// ---------------------------------------------------------------------------
// evaluation

std::string UsageState::key(const std::string& policy_id, std::size_t constraint_index) {
  return policy_id + "#" + std::to_string(constraint_index);
}

namespace {

// constraint indices are counted rule-major across the whole policy
std::size_t constraint_base_index(const Policy& policy, std::size_t rule_index) {
  std::size_t base = 0;
  for (std::size_t r = 0; r < rule_index; ++r)
    base += policy.rules[r].constraints.size();
  return base;
}

struct UsageView {
  std::int64_t spent = 0;
  std::int64_t count = 0;
};

UsageView effective_usage(const UsageState& usage, const std::string& key,
                          const std::string& currency, std::int64_t window_seconds,
                          std::int64_t now) {
  auto it = usage.entries.find(key);
  if (it == usage.entries.end() || !it->second.started) return {};
  const UsageEntry& e = it->second;
  if (now >= e.window_start + window_seconds) return {};  // window elapsed
  UsageView v;
  v.count = e.count;
  if (!currency.empty()) {
    auto s = e.spent.find(currency);
    if (s != e.spent.end()) v.spent = s->second;
  }
  return v;
}

// empty optional means the constraint holds
std::optional<std::string> constraint_failure(const Constraint& c,
                                              const AccessRequest& req,
                                              const UsageState& usage,
                                              const std::string& key,
                                              std::int64_t now) {
  if (const auto* b = std::get_if<BudgetConstraint>(&c)) {
    if (!req.amount) return std::nullopt;  // budget only gates purchases
    if (req.amount->currency != b->currency) return "CurrencyMismatch";
    auto v = effective_usage(usage, key, b->currency, b->window_seconds, now);
    if (v.spent + req.amount->value > b->limit) return "BudgetExceeded";
    return std::nullopt;
  }
  if (const auto* r = std::get_if<RateConstraint>(&c)) {
    auto v = effective_usage(usage, key, "", r->window_seconds, now);
    if (v.count + 1 > r->max_count) return "RateExceeded";
    return std::nullopt;
  }
  if (const auto* t = std::get_if<TimeWindowConstraint>(&c)) {
    if (now < t->start || now >= t->end) return "OutsideTimeWindow";
    return std::nullopt;
  }
  if (const auto* s = std::get_if<SchemaConstraint>(&c)) {
    if (req.payload && !check_schema(*s, *req.payload)) return "SchemaViolation";
    return std::nullopt;
  }
  return std::nullopt;
}

bool rule_matches(const Rule& rule, const Uri& uri, const Action& action) {
  bool resource_hit = std::any_of(
      rule.resources.begin(), rule.resources.end(),
      [&](const ResourcePattern& p) { return match_pattern(p, uri); });
  if (!resource_hit) return false;
  return std::any_of(rule.actions.begin(), rule.actions.end(),
                     [&](const Action& a) { return action_covers(a, action); });
}

}  // namespace

Decision evaluate(const Policy& policy, const AccessRequest& req,
                  const UsageState& usage, std::int64_t now) {
  Decision d;
  d.matched_rule.resize(1);

  auto uri = Uri::parse(req.resource);
  if (!uri.ok()) {
    d.outcome = Outcome::deny;
    d.reasons = {"MalformedResource"};
    return d;
  }

  std::optional<std::size_t> first_deny, first_permit_ok, first_permit_failed,
      first_approval;
  std::vector<std::string> failed_codes;

  for (std::size_t r = 0; r < policy.rules.size(); ++r) {
    const Rule& rule = policy.rules[r];
    if (!rule_matches(rule, uri.value(), req.action)) continue;
    switch (rule.effect) {
      case Effect::deny:
        if (!first_deny) first_deny = r;
        break;
      case Effect::require_approval:
        if (!first_approval) first_approval = r;
        break;
      case Effect::permit: {
        std::vector<std::string> codes;
        std::size_t base = constraint_base_index(policy, r);
        for (std::size_t c = 0; c < rule.constraints.size(); ++c) {
          auto key = UsageState::key(policy.policy_id, base + c);
          if (auto code =
                  constraint_failure(rule.constraints[c], req, usage, key, now))
            codes.push_back(*code);
        }
        if (codes.empty()) {
          if (!first_permit_ok) first_permit_ok = r;
        } else if (!first_permit_failed) {
          first_permit_failed = r;
          failed_codes = std::move(codes);
        }
        break;
      }
    }
  }

  if (first_deny) {
    d.outcome = Outcome::deny;
    d.matched_rule[0] = first_deny;
    d.reasons = {"ExplicitDeny"};
  } else if (first_permit_ok) {
    d.outcome = Outcome::permit;
    d.matched_rule[0] = first_permit_ok;
  } else if (first_permit_failed) {
    // a permit match with failing constraints converts to deny
    d.outcome = Outcome::deny;
    d.matched_rule[0] = first_permit_failed;
    d.reasons = failed_codes;
  } else if (first_approval) {
    d.outcome = Outcome::require_approval;
    d.matched_rule[0] = first_approval;
    d.reasons = {"ApprovalRequired"};
  } else if (policy.default_effect == DefaultEffect::require_approval) {
    d.outcome = Outcome::require_approval;
    d.reasons = {"DefaultRequireApproval"};
  } else {
    d.outcome = Outcome::deny;
    d.reasons = {"DefaultDeny"};
  }
  return d;
}

Result<Decision> evaluate_chain(const std::vector<Policy>& policies,
                                const AccessRequest& req, const UsageState& usage,
                                std::int64_t now) {
  if (policies.empty()) return Error(Errc::EmptyChain, "no policies to evaluate");
  Decision combined;
  combined.outcome = Outcome::permit;
  for (const auto& policy : policies) {
    Decision d = evaluate(policy, req, usage, now);
    combined.matched_rule.push_back(d.matched_rule[0]);
    if (d.outcome != Outcome::permit) {
      for (auto& reason : d.reasons) {
        if (std::find(combined.reasons.begin(), combined.reasons.end(), reason) ==
            combined.reasons.end())
          combined.reasons.push_back(reason);
      }
    }
    if (d.outcome == Outcome::deny) {
      combined.outcome = Outcome::deny;
    } else if (d.outcome == Outcome::require_approval &&
               combined.outcome != Outcome::deny) {
      combined.outcome = Outcome::require_approval;
    }
  }
  return combined;
}

void apply_usage(UsageState& usage, const std::vector<Policy>& policies,
                 const AccessRequest& req, const Decision& decision,
                 std::int64_t now) {
  if (decision.outcome != Outcome::permit) return;
  for (std::size_t i = 0; i < policies.size() && i < decision.matched_rule.size();
       ++i) {
    if (!decision.matched_rule[i]) continue;
    const Policy& policy = policies[i];
    std::size_t r = *decision.matched_rule[i];
    if (r >= policy.rules.size() || policy.rules[r].effect != Effect::permit)
      continue;
    std::size_t base = constraint_base_index(policy, r);
    const Rule& rule = policy.rules[r];
    for (std::size_t c = 0; c < rule.constraints.size(); ++c) {
      const Constraint& constraint = rule.constraints[c];
      std::int64_t window = 0;
      if (const auto* b = std::get_if<BudgetConstraint>(&constraint))
        window = b->window_seconds;
      else if (const auto* rt = std::get_if<RateConstraint>(&constraint))
        window = rt->window_seconds;
      else
        continue;  // time/schema constraints carry no usage

      UsageEntry& entry = usage.entries[UsageState::key(policy.policy_id, base + c)];
      if (!entry.started || now >= entry.window_start + window) {
        entry.started = true;
        entry.window_start = now;
        entry.spent.clear();
        entry.count = 0;
      }
      if (std::holds_alternative<BudgetConstraint>(constraint)) {
        if (req.amount) entry.spent[req.amount->currency] += req.amount->value;
      } else {
        entry.count += 1;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// schema checking

namespace {

bool schema_walk(const SchemaConstraint& c, const nlohmann::json& v,
                 const std::string& path) {
  if (v.is_object()) {
    for (const auto& [k, child] : v.items()) {
      std::string child_path = path.empty() ? k : path + "." + k;
      if (!schema_walk(c, child, child_path)) return false;
    }
    return true;
  }
  if (v.is_array()) {
    for (const auto& child : v)
      if (!schema_walk(c, child, path)) return false;
    return true;
  }
  // leaf: fields named "predicate" are governed by the predicate allowlist,
  // every other field path must appear in allowed_fields
  auto dot = path.rfind('.');
  std::string last = dot == std::string::npos ? path : path.substr(dot + 1);
  if (last == "predicate")
    return v.is_string() && c.allowed_predicates.count(v.get<std::string>()) > 0;
  return path.empty() || c.allowed_fields.count(path) > 0;
}

}  // namespace

bool check_schema(const SchemaConstraint& c, const nlohmann::json& payload) {
  return schema_walk(c, payload, "");
}

// ---------------------------------------------------------------------------
// subsumption

namespace {

bool host_subsumes(const std::string& a, const std::string& b) {
  if (a == b) return true;
  if (a.rfind("*.", 0) == 0) {
    std::string base = a.substr(2);
    if (b.rfind("*.", 0) == 0) {
      std::string bb = b.substr(2);
      return bb == base || ends_with(bb, "." + base);
    }
    return ends_with(b, "." + base) && b.size() > base.size() + 1;
  }
  return false;
}

// Segment-pattern NFA: state i = i pattern positions consumed; "**" loops.
using StateSet = std::set<std::size_t>;

StateSet closure(const std::vector<std::string>& pat, StateSet s) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i : StateSet(s)) {
      if (i < pat.size() && pat[i] == "**" && !s.count(i + 1)) {
        s.insert(i + 1);
        changed = true;
      }
    }
  }
  return s;
}

StateSet step(const std::vector<std::string>& pat, const StateSet& s,
              const std::string& symbol) {
  StateSet next;
  for (std::size_t i : s) {
    if (i >= pat.size()) continue;
    const std::string& seg = pat[i];
    if (seg == "**") {
      next.insert(i);
    } else if (seg == "*" || seg == symbol) {
      next.insert(i + 1);
    }
  }
  return closure(pat, next);
}

bool accepts(const std::vector<std::string>& pat, const StateSet& s) {
  return s.count(pat.size()) > 0;
}

// L(b) subseteq L(a), decided by searching the product automaton for a path
// accepted by b and rejected by a. The alphabet is the literals of both
// patterns plus one fresh symbol standing in for everything else.
bool segments_subsume(const std::vector<std::string>& a,
                      const std::vector<std::string>& b) {
  std::set<std::string> alphabet;
  for (const auto& s : a)
    if (s != "*" && s != "**") alphabet.insert(s);
  for (const auto& s : b)
    if (s != "*" && s != "**") alphabet.insert(s);
  alphabet.insert("\x01fresh");

  StateSet sa = closure(a, {0});
  StateSet sb = closure(b, {0});
  std::set<std::pair<StateSet, StateSet>> visited;
  std::vector<std::pair<StateSet, StateSet>> frontier{{sa, sb}};
  visited.insert(frontier[0]);
  while (!frontier.empty()) {
    auto [cur_a, cur_b] = frontier.back();
    frontier.pop_back();
    if (accepts(b, cur_b) && !accepts(a, cur_a)) return false;
    if (cur_b.empty()) continue;  // b dead, nothing more to find on this path
    for (const auto& symbol : alphabet) {
      auto na = step(a, cur_a, symbol);
      auto nb = step(b, cur_b, symbol);
      if (visited.insert({na, nb}).second) frontier.push_back({na, nb});
    }
  }
  return true;
}

}  // namespace

bool pattern_subsumes(const ResourcePattern& a, const ResourcePattern& b) {
  if (a.scheme != b.scheme) return false;
  if (!host_subsumes(a.host_pattern, b.host_pattern)) return false;
  return segments_subsume(a.path_segments, b.path_segments);
}

namespace {

bool action_subsumes(const Action& a, const Action& b) {
  if (a.verb != b.verb) return false;
  if (a.verb != Verb::execute) return true;
  if (!a.qualifier || !b.qualifier) return false;
  return *a.qualifier == "*" || *a.qualifier == *b.qualifier;
}

bool constraint_at_least_as_strict(const Constraint& child, const Constraint& parent) {
  if (const auto* pb = std::get_if<BudgetConstraint>(&parent)) {
    const auto* cb = std::get_if<BudgetConstraint>(&child);
    return cb && cb->currency == pb->currency && cb->limit <= pb->limit &&
           cb->window_seconds >= pb->window_seconds;
  }
  if (const auto* pr = std::get_if<RateConstraint>(&parent)) {
    const auto* cr = std::get_if<RateConstraint>(&child);
    return cr && cr->max_count <= pr->max_count &&
           cr->window_seconds >= pr->window_seconds;
  }
  if (const auto* pt = std::get_if<TimeWindowConstraint>(&parent)) {
    const auto* ct = std::get_if<TimeWindowConstraint>(&child);
    return ct && ct->start >= pt->start && ct->end <= pt->end;
  }
  if (const auto* ps = std::get_if<SchemaConstraint>(&parent)) {
    const auto* cs = std::get_if<SchemaConstraint>(&child);
    return cs &&
           std::includes(ps->allowed_fields.begin(), ps->allowed_fields.end(),
                         cs->allowed_fields.begin(), cs->allowed_fields.end()) &&
           std::includes(ps->allowed_predicates.begin(), ps->allowed_predicates.end(),
                         cs->allowed_predicates.begin(), cs->allowed_predicates.end());
  }
  return false;
}

// child permit rule entirely covered by one parent permit rule
bool permit_rule_subsumed(const Rule& child, const Rule& parent) {
  for (const auto& cp : child.resources) {
    bool covered = std::any_of(parent.resources.begin(), parent.resources.end(),
                               [&](const ResourcePattern& pp) {
                                 return pattern_subsumes(pp, cp);
                               });
    if (!covered) return false;
  }
  for (const auto& ca : child.actions) {
    bool covered = std::any_of(parent.actions.begin(), parent.actions.end(),
                               [&](const Action& pa) { return action_subsumes(pa, ca); });
    if (!covered) return false;
  }
  // every parent constraint needs an at-least-as-strict child counterpart
  for (const auto& pc : parent.constraints) {
    bool covered = std::any_of(child.constraints.begin(), child.constraints.end(),
                               [&](const Constraint& cc) {
                                 return constraint_at_least_as_strict(cc, pc);
                               });
    if (!covered) return false;
  }
  return true;
}

// parent deny covered by a child deny at least as broad (constraints do not
// gate deny matching, so they are ignored here)
bool deny_rule_covered(const Rule& parent, const Rule& child) {
  for (const auto& pp : parent.resources) {
    bool covered = std::any_of(child.resources.begin(), child.resources.end(),
                               [&](const ResourcePattern& cp) {
                                 return pattern_subsumes(cp, pp);
                               });
    if (!covered) return false;
  }
  for (const auto& pa : parent.actions) {
    bool covered = std::any_of(child.actions.begin(), child.actions.end(),
                               [&](const Action& ca) { return action_subsumes(ca, pa); });
    if (!covered) return false;
  }
  return true;
}

}  // namespace

bool is_attenuation_of(const Policy& child, const Policy& parent) {
  for (const auto& crule : child.rules) {
    if (crule.effect != Effect::permit) continue;
    bool covered = std::any_of(parent.rules.begin(), parent.rules.end(),
                               [&](const Rule& prule) {
                                 return prule.effect == Effect::permit &&
                                        permit_rule_subsumed(crule, prule);
                               });
    if (!covered) return false;
  }
  // a child permit that escapes a parent deny would break soundness
  for (const auto& prule : parent.rules) {
    if (prule.effect != Effect::deny) continue;
    bool covered = std::any_of(child.rules.begin(), child.rules.end(),
                               [&](const Rule& crule) {
                                 return crule.effect == Effect::deny &&
                                        deny_rule_covered(prule, crule);
                               });
    if (!covered) return false;
  }
  return true;
}

}  // namespace agentdel::policy
