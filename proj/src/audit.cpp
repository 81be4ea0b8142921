#include "agentdel/audit.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "agentdel/canonical.hpp"
#include "agentdel/crypto.hpp"

namespace agentdel::audit {

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::issue: return "issue";
    case EventKind::registration: return "register";
    case EventKind::delegate: return "delegate";
    case EventKind::approve: return "approve";
    case EventKind::authorize: return "authorize";
    case EventKind::revoke: return "revoke";
  }
  return "?";
}

std::optional<EventKind> event_kind_from_name(const std::string& name) {
  if (name == "issue") return EventKind::issue;
  if (name == "register") return EventKind::registration;
  if (name == "delegate") return EventKind::delegate;
  if (name == "approve") return EventKind::approve;
  if (name == "authorize") return EventKind::authorize;
  if (name == "revoke") return EventKind::revoke;
  return std::nullopt;
}

nlohmann::json AuditRecord::body_json() const {
  nlohmann::json j;
  j["seq"] = seq;
  j["prev_hash"] = prev_hash;
  j["timestamp"] = timestamp;
  j["event_kind"] = event_kind_name(event_kind);
  j["actor"] = actor;
  j["subject_refs"] = subject_refs;
  if (decision) j["decision"] = *decision;
  return j;
}

nlohmann::json AuditRecord::to_json() const {
  nlohmann::json j = body_json();
  j["record_hash"] = record_hash;
  return j;
}

std::string AuditRecord::compute_hash() const {
  auto bytes = canonical_bytes(body_json());
  if (!bytes.ok()) return {};
  return crypto::to_hex(crypto::sha256(bytes.value()));
}

Result<AuditRecord> AuditRecord::from_json(const nlohmann::json& j) {
  AuditRecord r;
  try {
    r.seq = j.at("seq").get<std::int64_t>();
    r.prev_hash = j.at("prev_hash").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    auto kind = event_kind_from_name(j.at("event_kind").get<std::string>());
    if (!kind) return Error(Errc::ValidationError, "unknown audit event kind");
    r.event_kind = *kind;
    r.actor = j.at("actor").get<std::string>();
    for (const auto& s : j.at("subject_refs")) r.subject_refs.push_back(s.get<std::string>());
    if (j.contains("decision")) r.decision = j["decision"];
    r.record_hash = j.at("record_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    return Error(Errc::ValidationError, e.what());
  }
  return r;
}

Result<Filter> Filter::from_json(const nlohmann::json& j) {
  if (!j.is_object())
    return Error(Errc::ValidationError, "filter must be a JSON object");
  Filter f;
  if (j.contains("event_kind")) {
    auto kind = event_kind_from_name(j["event_kind"].get<std::string>());
    if (!kind)
      return Error(Errc::ValidationError,
                   "unknown event kind '" + j["event_kind"].get<std::string>() + "'");
    f.event_kind = kind;
  }
  if (j.contains("actor")) f.actor = j["actor"].get<std::string>();
  if (j.contains("subject_ref")) f.subject_ref = j["subject_ref"].get<std::string>();
  if (j.contains("from") || j.contains("to"))
    f.time_range = {j.value("from", std::int64_t{0}),
                    j.value("to", std::numeric_limits<std::int64_t>::max())};
  return f;
}

bool Filter::matches(const AuditRecord& r) const {
  if (event_kind && r.event_kind != *event_kind) return false;
  if (actor && r.actor != *actor) return false;
  if (subject_ref &&
      std::find(r.subject_refs.begin(), r.subject_refs.end(), *subject_ref) ==
          r.subject_refs.end())
    return false;
  if (time_range &&
      (r.timestamp < time_range->first || r.timestamp >= time_range->second))
    return false;
  return true;
}

Result<std::vector<AuditRecord>> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Error(Errc::StorageFailure, "cannot open " + path);
  std::vector<AuditRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      return Error(Errc::StorageFailure, "corrupt audit line " + std::to_string(out.size()));
    auto r = AuditRecord::from_json(j);
    if (!r.ok()) return r.error();
    out.push_back(std::move(r.value()));
  }
  return out;
}

Result<AuditLog> AuditLog::open(const std::string& path) {
  AuditLog log;
  log.path_ = path;
  std::ifstream probe(path);
  if (probe.good()) {
    auto loaded = load_records(path);
    if (!loaded.ok()) return loaded.error();
    log.records_ = std::move(loaded.value());
  }
  return log;
}

Result<AuditRecord> AuditLog::append(EventKind kind, const std::string& actor,
                                     std::vector<std::string> subject_refs,
                                     std::optional<nlohmann::json> decision,
                                     std::int64_t timestamp) {
  std::lock_guard lock(*mu_);
  AuditRecord r;
  r.seq = static_cast<std::int64_t>(records_.size());
  r.prev_hash = records_.empty() ? kGenesisHash : records_.back().record_hash;
  r.timestamp = timestamp;
  r.event_kind = kind;
  r.actor = actor;
  r.subject_refs = std::move(subject_refs);
  r.decision = std::move(decision);
  r.record_hash = r.compute_hash();
  if (r.record_hash.empty())
    return Error(Errc::StorageFailure, "record not canonically serializable");
  if (path_) {
    std::ofstream out(*path_, std::ios::app);
    if (!out) return Error(Errc::StorageFailure, "cannot append to " + *path_);
    out << r.to_json().dump() << "\n";
    out.flush();
    if (!out) return Error(Errc::StorageFailure, "write failed for " + *path_);
  }
  records_.push_back(r);
  return r;
}

std::vector<AuditRecord> AuditLog::records() const {
  std::lock_guard lock(*mu_);
  return records_;
}

std::vector<AuditRecord> AuditLog::query(const Filter& filter) const {
  std::lock_guard lock(*mu_);
  std::vector<AuditRecord> out;
  for (const auto& r : records_)
    if (filter.matches(r)) out.push_back(r);
  return out;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(*mu_);
  return records_.size();
}

std::optional<std::size_t> verify_chain(const std::vector<AuditRecord>& records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const AuditRecord& r = records[i];
    if (r.record_hash != r.compute_hash()) return i;
    if (r.seq != static_cast<std::int64_t>(i)) return i;
    const std::string& expected_prev =
        i == 0 ? kGenesisHash : records[i - 1].record_hash;
    if (r.prev_hash != expected_prev) return i;
  }
  return std::nullopt;
}

}  // namespace agentdel::audit
