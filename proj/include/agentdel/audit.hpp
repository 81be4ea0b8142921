#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "agentdel/error.hpp"
#include "json.hpp"

namespace agentdel::audit {

enum class EventKind { issue, registration, delegate, approve, authorize, revoke };
const char* event_kind_name(EventKind k);
std::optional<EventKind> event_kind_from_name(const std::string& name);

inline const std::string kGenesisHash(64, '0');

struct AuditRecord {
  std::int64_t seq = 0;
  std::string prev_hash;  // genesis: 64 zeros
  std::int64_t timestamp = 0;
  EventKind event_kind = EventKind::issue;
  std::string actor;  // GlobalId text
  std::vector<std::string> subject_refs;
  std::optional<nlohmann::json> decision;  // Decision summary, if any
  std::string record_hash;

  nlohmann::json body_json() const;  // everything except record_hash
  nlohmann::json to_json() const;
  static Result<AuditRecord> from_json(const nlohmann::json& j);
  std::string compute_hash() const;
};

struct Filter {
  std::optional<EventKind> event_kind;
  std::optional<std::string> actor;
  std::optional<std::string> subject_ref;
  std::optional<std::pair<std::int64_t, std::int64_t>> time_range;  // [from, to)

  bool matches(const AuditRecord& r) const;
  static Result<Filter> from_json(const nlohmann::json& j);
};

// Hash-chained append-only log; single writer, prefix-consistent readers.
// Optionally file-backed as NDJSON, one canonical record per line.
class AuditLog {
 public:
  AuditLog() = default;  // in-memory
  static Result<AuditLog> open(const std::string& path);

  Result<AuditRecord> append(EventKind kind, const std::string& actor,
                             std::vector<std::string> subject_refs,
                             std::optional<nlohmann::json> decision,
                             std::int64_t timestamp);

  std::vector<AuditRecord> records() const;
  std::vector<AuditRecord> query(const Filter& filter) const;
  std::size_t size() const;

 private:
  // behind a pointer so the log stays movable
  mutable std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  std::vector<AuditRecord> records_;
  std::optional<std::string> path_;
};

// Recomputes every hash and chaining link; nullopt when intact, otherwise the
// index of the first broken record.
std::optional<std::size_t> verify_chain(const std::vector<AuditRecord>& records);

Result<std::vector<AuditRecord>> load_records(const std::string& path);

}  // namespace agentdel::audit
