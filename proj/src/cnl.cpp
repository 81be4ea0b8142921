#include "agentdel/cnl.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "agentdel/canonical.hpp"

namespace agentdel::cnl {

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct Token {
  enum Type { Word, Comma, Dot, End } type = End;
  std::string text;
  int line = 1;
  int column = 1;
};

std::vector<Token> lex(const std::string& text) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      col = 1;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++col;
      ++i;
      continue;
    }
    if (c == ',') {
      out.push_back({Token::Comma, ",", line, col});
      ++col;
      ++i;
      continue;
    }
    int start_col = col;
    std::string word;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
           text[i] != ',') {
      word.push_back(text[i]);
      ++i;
      ++col;
    }
    // a trailing '.' terminates the statement rather than the word
    bool dot = false;
    if (!word.empty() && word.back() == '.') {
      word.pop_back();
      dot = true;
    }
    if (!word.empty()) out.push_back({Token::Word, word, line, start_col});
    if (dot) out.push_back({Token::Dot, ".", line, start_col + static_cast<int>(word.size())});
  }
  out.push_back({Token::End, "", line, col});
  return out;
}

std::string at_pos(const Token& t) {
  return "line " + std::to_string(t.line) + ", col " + std::to_string(t.column);
}

Error err_at(Errc code, const Token& t, const std::string& what) {
  return Error(code, at_pos(t) + ": " + what);
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  Result<std::vector<CnlStatement>> parse() {
    if (cur().type == Token::End)
      return Error(Errc::EmptyInput, "no statements in input");
    std::vector<CnlStatement> out;
    while (cur().type != Token::End) {
      auto st = statement();
      if (!st.ok()) return st.error();
      out.push_back(std::move(st.value()));
    }
    return out;
  }

 private:
  const Token& cur() const { return tokens_[pos_]; }
  const Token& peek() const {
    return tokens_[std::min(pos_ + 1, tokens_.size() - 1)];
  }
  void advance() { if (pos_ + 1 < tokens_.size()) ++pos_; }

  bool word_is(const std::string& w) const {
    return cur().type == Token::Word && lowercase(cur().text) == w;
  }

  static bool is_constraint_keyword(const std::string& w) {
    return w == "limit" || w == "at" || w == "until";
  }

  Result<CnlStatement> statement() {
    CnlStatement st;
    // effect
    if (cur().type != Token::Word)
      return err_at(Errc::ParseError, cur(), "expected a statement");
    std::string head = lowercase(cur().text);
    if (is_constraint_keyword(head))
      return err_at(Errc::DanglingConstraint, cur(),
                    "constraint '" + cur().text + "' has no statement to attach to");
    if (head == "allow") {
      st.effect = policy::Effect::permit;
      advance();
    } else if (head == "deny") {
      st.effect = policy::Effect::deny;
      advance();
    } else if (head == "ask") {
      advance();
      if (!word_is("before"))
        return err_at(Errc::ParseError, cur(), "expected 'before' after 'ask'");
      advance();
      st.effect = policy::Effect::require_approval;
    } else {
      return err_at(Errc::UnknownKeyword, cur(),
                    "unknown effect keyword '" + cur().text + "'");
    }

    // actionlist
    if (word_is("all")) {
      st.all_actions = true;
      advance();
    } else {
      while (true) {
        if (cur().type != Token::Word)
          return err_at(Errc::ParseError, cur(), "expected an action");
        auto verb = policy::verb_from_name(lowercase(cur().text));
        if (!verb)
          return err_at(Errc::UnknownKeyword, cur(),
                        "unknown action '" + cur().text + "'");
        policy::Action action;
        action.verb = *verb;
        advance();
        if (*verb == policy::Verb::execute) {
          // optional command qualifier; absent means any command
          if (cur().type == Token::Word && !word_is("on")) {
            action.qualifier = cur().text;
            advance();
          } else {
            action.qualifier = "*";
          }
        }
        st.actions.push_back(action);
        if (cur().type == Token::Comma) {
          advance();
          continue;
        }
        break;
      }
    }

    if (!word_is("on"))
      return err_at(Errc::ParseError, cur(), "expected 'on' before the resource");
    advance();

    // resource
    if (cur().type != Token::Word)
      return err_at(Errc::ParseError, cur(), "expected a resource");
    st.resource = cur().text;
    st.resource_is_label = st.resource.find("://") == std::string::npos;
    if (!st.resource_is_label) {
      auto pat = policy::ResourcePattern::parse(st.resource);
      if (!pat.ok())
        return err_at(Errc::ParseError, cur(),
                      "bad resource pattern: " + pat.error().message);
    }
    advance();

    // constraints
    while (cur().type == Token::Word && is_constraint_keyword(lowercase(cur().text))) {
      auto c = constraint();
      if (!c.ok()) return c.error();
      st.constraints.push_back(std::move(c.value()));
    }

    if (cur().type != Token::Dot)
      return err_at(Errc::ParseError, cur(), "expected '.' to end the statement");
    advance();
    return st;
  }

  Result<policy::Constraint> constraint() {
    std::string head = lowercase(cur().text);
    Token head_tok = cur();
    advance();
    if (head == "limit") {
      auto money = parse_money();
      if (!money.ok()) return money.error();
      if (cur().type != Token::Word || cur().text.size() != 3 ||
          !std::all_of(cur().text.begin(), cur().text.end(),
                       [](unsigned char c) { return std::isupper(c); }))
        return err_at(Errc::ParseError, cur(),
                      "expected a 3-letter currency code");
      std::string currency = cur().text;
      advance();
      auto window = parse_per_window();
      if (!window.ok()) return window.error();
      return policy::Constraint(
          policy::BudgetConstraint{money.value(), currency, window.value()});
    }
    if (head == "at") {
      if (!word_is("most"))
        return err_at(Errc::ParseError, cur(), "expected 'most' after 'at'");
      advance();
      if (cur().type != Token::Word ||
          !std::all_of(cur().text.begin(), cur().text.end(),
                       [](unsigned char c) { return std::isdigit(c); }))
        return err_at(Errc::ParseError, cur(), "expected a count");
      std::int64_t count = std::stoll(cur().text);
      advance();
      auto window = parse_per_window();
      if (!window.ok()) return window.error();
      return policy::Constraint(policy::RateConstraint{count, window.value()});
    }
    if (head == "until") {
      auto ts = parse_timestamp();
      if (!ts.ok()) return ts.error();
      return policy::Constraint(policy::TimeWindowConstraint{0, ts.value()});
    }
    return err_at(Errc::ParseError, head_tok, "unknown constraint");
  }

  Result<std::int64_t> parse_money() {
    if (cur().type != Token::Word)
      return err_at(Errc::ParseError, cur(), "expected an amount");
    const std::string& t = cur().text;
    auto dot = t.find('.');
    std::string whole = dot == std::string::npos ? t : t.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : t.substr(dot + 1);
    auto all_digits = [](const std::string& s) {
      return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c);
      });
    };
    if (!all_digits(whole) || (dot != std::string::npos && !all_digits(frac)))
      return err_at(Errc::ParseError, cur(), "expected a money amount");
    if (frac.size() > 2)
      return err_at(Errc::ParseError, cur(),
                    "more than 2 fraction digits in money amount");
    while (frac.size() < 2) frac.push_back('0');
    std::int64_t minor = std::stoll(whole) * 100 + std::stoll(frac);
    advance();
    return minor;
  }

  Result<std::int64_t> parse_per_window() {
    if (!word_is("per"))
      return err_at(Errc::ParseError, cur(), "expected 'per'");
    advance();
    std::string w = cur().type == Token::Word ? lowercase(cur().text) : "";
    std::int64_t seconds = 0;
    if (w == "minute") seconds = 60;
    else if (w == "hour") seconds = 3600;
    else if (w == "day") seconds = 86400;
    else
      return err_at(Errc::UnknownKeyword, cur(),
                    "expected a window of minute, hour or day");
    advance();
    return seconds;
  }

  Result<std::int64_t> parse_timestamp() {
    if (cur().type != Token::Word)
      return err_at(Errc::ParseError, cur(), "expected a timestamp");
    const std::string& t = cur().text;
    if (std::all_of(t.begin(), t.end(),
                    [](unsigned char c) { return std::isdigit(c); })) {
      std::int64_t v = std::stoll(t);
      advance();
      return v;
    }
    // YYYY-MM-DDTHH:MM:SSZ
    int y, mo, d, h, mi, s;
    char z = 0;
    if (std::sscanf(t.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi,
                    &s, &z) == 7 &&
        z == 'Z') {
      // days-from-civil, Gregorian
      std::int64_t yy = y - (mo <= 2);
      std::int64_t era = (yy >= 0 ? yy : yy - 399) / 400;
      std::int64_t yoe = yy - era * 400;
      std::int64_t doy = (153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1;
      std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
      std::int64_t days = era * 146097 + doe - 719468;
      advance();
      return days * 86400 + h * 3600 + mi * 60 + s;
    }
    return err_at(Errc::ParseError, cur(),
                  "expected an epoch or YYYY-MM-DDTHH:MM:SSZ timestamp");
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

std::vector<policy::Action> all_verbs() {
  return {
      {policy::Verb::read, std::nullopt},
      {policy::Verb::write, std::nullopt},
      {policy::Verb::execute, "*"},
      {policy::Verb::purchase, std::nullopt},
      {policy::Verb::message, std::nullopt},
  };
}

}  // namespace

Result<std::vector<CnlStatement>> parse_cnl(const std::string& text) {
  return Parser(lex(text)).parse();
}

// ---------------------------------------------------------------------------
// catalog

Status ResourceCatalog::add(const std::string& label,
                            std::vector<policy::ResourcePattern> patterns) {
  std::string key = lowercase(label);
  if (entries_.count(key))
    return Error(Errc::ValidationError, "duplicate catalog label '" + label + "'");
  entries_[key] = std::move(patterns);
  display_[key] = label;
  return ok_status();
}

std::optional<std::vector<policy::ResourcePattern>> ResourceCatalog::lookup(
    const std::string& label) const {
  auto it = entries_.find(lowercase(label));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json ResourceCatalog::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, patterns] : entries_) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : patterns) list.push_back(p.str());
    j[display_.at(key)] = list;
  }
  return j;
}

Result<ResourceCatalog> ResourceCatalog::from_json(const nlohmann::json& j) {
  if (!j.is_object())
    return Error(Errc::ValidationError, "catalog must be a JSON object");
  ResourceCatalog cat;
  for (const auto& [label, list] : j.items()) {
    std::vector<policy::ResourcePattern> patterns;
    nlohmann::json entries = list.is_string() ? nlohmann::json::array({list}) : list;
    if (!entries.is_array())
      return Error(Errc::ValidationError, "catalog entry must be a pattern list");
    for (const auto& s : entries) {
      auto p = policy::ResourcePattern::parse(s.get<std::string>());
      if (!p.ok()) return p.error();
      patterns.push_back(std::move(p.value()));
    }
    auto st = cat.add(label, std::move(patterns));
    if (!st.ok()) return st.error();
  }
  return cat;
}

// ---------------------------------------------------------------------------
// compilation

PolicyDraft compile(const std::vector<CnlStatement>& statements,
                    const ResourceCatalog& catalog, const CompileDefaults& defaults) {
  PolicyDraft draft;
  draft.statements = statements;
  policy::Policy compiled;
  compiled.policy_id = defaults.policy_id;
  compiled.default_effect = defaults.default_effect;

  for (const auto& st : statements) {
    policy::Rule rule;
    rule.effect = st.effect;
    rule.actions = st.all_actions ? all_verbs() : st.actions;
    rule.constraints = st.constraints;
    if (st.resource_is_label) {
      auto patterns = catalog.lookup(st.resource);
      if (!patterns) {
        if (std::find(draft.unresolved_labels.begin(), draft.unresolved_labels.end(),
                      st.resource) == draft.unresolved_labels.end())
          draft.unresolved_labels.push_back(st.resource);
        continue;
      }
      rule.resources = *patterns;
    } else {
      auto p = policy::ResourcePattern::parse(st.resource);
      if (!p.ok()) continue;  // rejected at parse time already
      rule.resources = {p.value()};
    }
    compiled.rules.push_back(std::move(rule));
  }

  if (draft.unresolved_labels.empty()) draft.compiled = std::move(compiled);
  return draft;
}

PolicyDraft compile_text(const std::string& text, const ResourceCatalog& catalog,
                         const CompileDefaults& defaults,
                         std::optional<Error>* parse_error) {
  auto statements = parse_cnl(text);
  if (!statements.ok()) {
    if (parse_error) *parse_error = statements.error();
    return {};
  }
  PolicyDraft draft = compile(statements.value(), catalog, defaults);
  draft.source_text = text;
  return draft;
}

tokens::HashRef policy_hash(const policy::Policy& policy) {
  auto bytes = canonical_bytes(policy.to_json());
  return tokens::HashRef::of(
      crypto::sha256(bytes.ok() ? bytes.value() : std::vector<std::uint8_t>{}));
}

// ---------------------------------------------------------------------------
// review rendering

namespace {

std::string money_text(std::int64_t minor) {
  std::string frac = std::to_string(minor % 100);
  if (frac.size() < 2) frac = "0" + frac;
  return std::to_string(minor / 100) + "." + frac;
}

std::string constraint_text(const policy::Constraint& c) {
  if (const auto* b = std::get_if<policy::BudgetConstraint>(&c))
    return "limit " + money_text(b->limit) + " " + b->currency + " per " +
           std::to_string(b->window_seconds) + "s";
  if (const auto* r = std::get_if<policy::RateConstraint>(&c))
    return "at most " + std::to_string(r->max_count) + " per " +
           std::to_string(r->window_seconds) + "s";
  if (const auto* t = std::get_if<policy::TimeWindowConstraint>(&c))
    return "between " + std::to_string(t->start) + " and " + std::to_string(t->end);
  if (const auto* s = std::get_if<policy::SchemaConstraint>(&c))
    return "schema of " + std::to_string(s->allowed_fields.size()) + " fields, " +
           std::to_string(s->allowed_predicates.size()) + " predicates";
  return "?";
}

std::string actions_text(const std::vector<policy::Action>& actions) {
  if (actions == std::vector<policy::Action>{{policy::Verb::read, std::nullopt},
                                             {policy::Verb::write, std::nullopt},
                                             {policy::Verb::execute, "*"},
                                             {policy::Verb::purchase, std::nullopt},
                                             {policy::Verb::message, std::nullopt}})
    return "all";
  std::string out;
  for (const auto& a : actions) {
    if (!out.empty()) out += ",";
    out += a.str();
  }
  return out;
}

std::string effect_upper(policy::Effect e) {
  switch (e) {
    case policy::Effect::permit: return "PERMIT";
    case policy::Effect::deny: return "DENY";
    case policy::Effect::require_approval: return "ASK";
  }
  return "?";
}

}  // namespace

Result<std::string> render_for_review(const PolicyDraft& draft,
                                      const RenderOptions& opts) {
  if (!draft.compiled && draft.unresolved_labels.empty())
    return Error(Errc::ValidationError, "draft was never compiled");
  std::ostringstream out;
  if (draft.compiled) {
    const policy::Policy& p = *draft.compiled;
    if (p.rules.empty()) {
      out << "DEFAULT: "
          << (p.default_effect == policy::DefaultEffect::deny ? "deny"
                                                              : "require_approval")
          << "\n";
    }
    for (const auto& rule : p.rules) {
      out << effect_upper(rule.effect) << " " << actions_text(rule.actions) << " on";
      for (const auto& pat : rule.resources) out << " " << pat.str();
      for (const auto& c : rule.constraints) out << " [" << constraint_text(c) << "]";
      out << "\n";
      if (opts.catalog) {
        for (const auto& pat : rule.resources) {
          std::size_t covered = 0;
          for (const auto& [label, patterns] : opts.catalog->entries())
            for (const auto& cp : patterns)
              if (policy::pattern_subsumes(pat, cp)) ++covered;
          if (covered > opts.broad_match_threshold)
            out << "WARNING: " << pat.str() << " covers " << covered
                << " catalog entries\n";
        }
      }
    }
  }
  if (!draft.unresolved_labels.empty()) {
    out << "UNRESOLVED:";
    for (const auto& label : draft.unresolved_labels) out << " " << label;
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// approval

namespace {
nlohmann::json approval_body(const tokens::GlobalId& approver,
                             const tokens::HashRef& draft_hash, std::int64_t at) {
  nlohmann::json j;
  j["approver"] = approver.str();
  j["draft_hash"] = draft_hash.hex;
  j["approved_at"] = at;
  return j;
}
}  // namespace

nlohmann::json Approval::to_json() const {
  nlohmann::json j = approval_body(approver, draft_hash, approved_at);
  j["signature"] = crypto::to_hex(signature);
  return j;
}

Result<Approval> Approval::from_json(const nlohmann::json& j) {
  Approval a;
  try {
    auto id = tokens::GlobalId::parse(j.at("approver").get<std::string>());
    if (!id.ok()) return id.error();
    a.approver = id.value();
    a.draft_hash = tokens::HashRef{j.at("draft_hash").get<std::string>()};
    if (!a.draft_hash.valid())
      return Error(Errc::ValidationError, "draft_hash must be 64 lowercase hex chars");
    a.approved_at = j.at("approved_at").get<std::int64_t>();
    auto sig = crypto::array_from_hex<crypto::kSignatureBytes>(
        j.at("signature").get<std::string>());
    if (!sig) return Error(Errc::ValidationError, "bad approval signature encoding");
    a.signature = *sig;
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  return a;
}

Result<Approval> approve(const PolicyDraft& draft, const crypto::SecretKey& approver_key,
                         const tokens::GlobalId& approver_id, std::int64_t now) {
  if (!draft.unresolved_labels.empty())
    return Error(Errc::UnresolvedLabels,
                 "draft has unresolved labels and cannot be approved");
  if (!draft.compiled)
    return Error(Errc::ValidationError, "draft was never compiled");
  Approval a;
  a.approver = approver_id;
  a.draft_hash = policy_hash(*draft.compiled);
  a.approved_at = now;
  auto bytes = canonical_bytes(approval_body(a.approver, a.draft_hash, a.approved_at));
  if (!bytes.ok()) return bytes.error();
  a.signature = crypto::sign(bytes.value(), approver_key);
  return a;
}

bool verify_approval(const Approval& approval, const crypto::PublicKey& approver_key,
                     const policy::Policy& activated_policy) {
  if (policy_hash(activated_policy) != approval.draft_hash) return false;
  auto bytes = canonical_bytes(
      approval_body(approval.approver, approval.draft_hash, approval.approved_at));
  if (!bytes.ok()) return false;
  return crypto::verify(bytes.value(), approval.signature, approver_key);
}

}  // namespace agentdel::cnl
