#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "agentdel/audit.hpp"
#include "agentdel/crypto.hpp"

using namespace agentdel;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path();
  return (dir / ("agentdel_audit_" + tag + "_" +
                 std::to_string(::getpid()) + ".ndjson"))
      .string();
}

audit::AuditLog make_log(std::size_t n, std::uint64_t salt = 0) {
  audit::AuditLog log;
  std::mt19937_64 rng(1234 + salt);
  const audit::EventKind kinds[] = {
      audit::EventKind::issue,     audit::EventKind::registration,
      audit::EventKind::delegate,  audit::EventKind::approve,
      audit::EventKind::authorize, audit::EventKind::revoke};
  for (std::size_t i = 0; i < n; ++i) {
    auto kind = kinds[rng() % 6];
    std::string actor = "op" + std::to_string(rng() % 3) + ".example!u" +
                        std::to_string(rng() % 4);
    std::vector<std::string> refs{"ref-" + std::to_string(rng() % 8)};
    std::optional<json> decision;
    if (kind == audit::EventKind::authorize)
      decision = json{{"effect", (rng() % 2) ? "permit" : "deny"}};
    auto r = log.append(kind, actor, refs, decision,
                        1700000000 + static_cast<std::int64_t>(i) * 7);
    REQUIRE(r.ok());
  }
  return log;
}

}  // namespace

TEST_CASE("event kind names round-trip and registration serializes as 'register'") {
  using audit::EventKind;
  const EventKind all[] = {EventKind::issue,     EventKind::registration,
                           EventKind::delegate,  EventKind::approve,
                           EventKind::authorize, EventKind::revoke};
  for (auto k : all) {
    auto name = audit::event_kind_name(k);
    auto back = audit::event_kind_from_name(name);
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK(std::string(audit::event_kind_name(EventKind::registration)) ==
        "register");
  CHECK_FALSE(audit::event_kind_from_name("registration").has_value());
  CHECK_FALSE(audit::event_kind_from_name("").has_value());
}

TEST_CASE("first record chains from the all-zero genesis hash") {
  audit::AuditLog log;
  auto r = log.append(audit::EventKind::issue, "op1.example!alice", {"t1"},
                      std::nullopt, 1700000000);
  REQUIRE(r.ok());
  CHECK(r.value().prev_hash == std::string(64, '0'));
  CHECK(r.value().seq == 0);
  CHECK(r.value().record_hash.size() == 64);
  // the hash covers the body, so it must match an independent recomputation
  auto dumped = r.value().body_json().dump();
  std::vector<std::uint8_t> bytes(dumped.begin(), dumped.end());
  CHECK(r.value().record_hash == crypto::to_hex(crypto::sha256(bytes)));
}

TEST_CASE("records serialize to JSON and back without loss") {
  auto log = make_log(20);
  for (const auto& r : log.records()) {
    auto back = audit::AuditRecord::from_json(r.to_json());
    REQUIRE(back.ok());
    CHECK(back.value().to_json() == r.to_json());
    CHECK(back.value().compute_hash() == r.record_hash);
  }
}

TEST_CASE("file-backed log persists as NDJSON and reopens intact") {
  auto path = temp_path("reopen");
  std::filesystem::remove(path);
  {
    auto log = audit::AuditLog::open(path);
    REQUIRE(log.ok());
    for (int i = 0; i < 10; ++i) {
      auto r = log.value().append(audit::EventKind::authorize,
                                  "op1.example!a", {"tok"},
                                  json{{"effect", "permit"}}, 1700000000 + i);
      REQUIRE(r.ok());
    }
  }
  // one JSON object per line
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CHECK_FALSE(json::parse(line, nullptr, false).is_discarded());
    ++lines;
  }
  CHECK(lines == 10);

  auto reopened = audit::AuditLog::open(path);
  REQUIRE(reopened.ok());
  CHECK(reopened.value().size() == 10);
  CHECK_FALSE(audit::verify_chain(reopened.value().records()).has_value());
  // appending after reopen continues the chain
  auto more = reopened.value().append(audit::EventKind::revoke,
                                      "op1.example!a", {"tok"}, std::nullopt,
                                      1700000100);
  REQUIRE(more.ok());
  CHECK(more.value().seq == 10);
  auto final_records = audit::load_records(path);
  REQUIRE(final_records.ok());
  CHECK(final_records.value().size() == 11);
  CHECK_FALSE(audit::verify_chain(final_records.value()).has_value());
  std::filesystem::remove(path);
}

TEST_CASE("opening a missing path starts an empty log") {
  auto path = temp_path("fresh");
  std::filesystem::remove(path);
  auto log = audit::AuditLog::open(path);
  REQUIRE(log.ok());
  CHECK(log.value().size() == 0);
  std::filesystem::remove(path);
}

TEST_CASE("verify_chain accepts intact logs of any size") {
  CHECK_FALSE(audit::verify_chain({}).has_value());
  for (std::size_t n : {1u, 2u, 17u, 100u}) {
    auto log = make_log(n, n);
    CHECK_FALSE(audit::verify_chain(log.records()).has_value());
  }
}

TEST_CASE("field tampering is detected at the altered record") {
  auto base = make_log(30).records();

  SUBCASE("actor rewritten") {
    auto recs = base;
    recs[12].actor = "op9.example!mallory";
    auto broken = audit::verify_chain(recs);
    REQUIRE(broken.has_value());
    CHECK(*broken == 12);
  }
  SUBCASE("timestamp rewritten") {
    auto recs = base;
    recs[0].timestamp += 1;
    auto broken = audit::verify_chain(recs);
    REQUIRE(broken.has_value());
    CHECK(*broken == 0);
  }
  SUBCASE("decision rewritten with hash recomputed breaks the successor") {
    auto recs = base;
    // find an authorize record that has a successor
    std::size_t i = 0;
    while (i + 1 < recs.size() &&
           recs[i].event_kind != audit::EventKind::authorize)
      ++i;
    REQUIRE(i + 1 < recs.size());
    recs[i].decision = json{{"effect", "permit"}, {"forged", true}};
    recs[i].record_hash = recs[i].compute_hash();
    auto broken = audit::verify_chain(recs);
    REQUIRE(broken.has_value());
    CHECK(*broken == i + 1);  // prev_hash of the next record no longer links
  }
}

TEST_CASE("deleting or inserting records breaks the chain") {
  auto base = make_log(25).records();

  SUBCASE("drop a middle record") {
    auto recs = base;
    recs.erase(recs.begin() + 10);
    auto broken = audit::verify_chain(recs);
    REQUIRE(broken.has_value());
    CHECK(*broken == 10);  // seq and prev_hash both disagree there
  }
  SUBCASE("drop the final record leaves a shorter but intact prefix") {
    auto recs = base;
    recs.pop_back();
    CHECK_FALSE(audit::verify_chain(recs).has_value());
  }
  SUBCASE("insert a fabricated record") {
    auto recs = base;
    audit::AuditRecord fake = recs[5];
    fake.actor = "op1.example!intruder";
    fake.record_hash = fake.compute_hash();
    recs.insert(recs.begin() + 6, fake);
    auto broken = audit::verify_chain(recs);
    REQUIRE(broken.has_value());
    CHECK(*broken <= 6);
  }
  SUBCASE("swap two adjacent records") {
    auto recs = base;
    std::swap(recs[7], recs[8]);
    auto broken = audit::verify_chain(recs);
    REQUIRE(broken.has_value());
    CHECK(*broken == 7);
  }
}

TEST_CASE("randomized corruption always reports the first broken index") {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 200; ++iter) {
    auto recs = make_log(40, 1000 + iter).records();
    std::size_t victim = rng() % recs.size();
    switch (rng() % 4) {
      case 0: recs[victim].actor += "x"; break;
      case 1: recs[victim].prev_hash[0] =
                  recs[victim].prev_hash[0] == 'f' ? '0' : 'f';
              break;
      case 2: recs[victim].subject_refs.push_back("extra"); break;
      case 3: recs[victim].timestamp -= 1; break;
    }
    auto broken = audit::verify_chain(recs);
    REQUIRE(broken.has_value());
    CHECK(*broken == victim);
  }
}

TEST_CASE("query matches an independently filtered reference") {
  auto log = make_log(200);
  auto all = log.records();

  auto check_filter = [&](const audit::Filter& f) {
    std::vector<audit::AuditRecord> expected;
    for (const auto& r : all)
      if (f.matches(r)) expected.push_back(r);
    auto got = log.query(f);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i].to_json() == expected[i].to_json());
  };

  audit::Filter by_kind;
  by_kind.event_kind = audit::EventKind::authorize;
  check_filter(by_kind);
  CHECK_FALSE(log.query(by_kind).empty());

  audit::Filter by_actor;
  by_actor.actor = "op1.example!u2";
  check_filter(by_actor);

  audit::Filter by_ref;
  by_ref.subject_ref = "ref-3";
  check_filter(by_ref);
  CHECK_FALSE(log.query(by_ref).empty());

  audit::Filter by_time;
  by_time.time_range = {{1700000100, 1700000500}};
  check_filter(by_time);

  audit::Filter combined;
  combined.event_kind = audit::EventKind::authorize;
  combined.subject_ref = "ref-1";
  combined.time_range = {{1700000000, 1700002000}};
  check_filter(combined);
}

TEST_CASE("filters parse from JSON") {
  auto f = audit::Filter::from_json(
      json{{"event_kind", "register"}, {"actor", "op1.example!a"},
           {"subject_ref", "tok"}, {"from", 10}, {"to", 20}});
  REQUIRE(f.ok());
  CHECK(f.value().event_kind == audit::EventKind::registration);
  CHECK(f.value().actor == "op1.example!a");
  CHECK(f.value().subject_ref == "tok");
  REQUIRE(f.value().time_range.has_value());
  CHECK(f.value().time_range->first == 10);
  CHECK(f.value().time_range->second == 20);

  // half-open range: only "from" given
  auto half = audit::Filter::from_json(json{{"from", 42}});
  REQUIRE(half.ok());
  REQUIRE(half.value().time_range.has_value());
  CHECK(half.value().time_range->first == 42);

  CHECK_FALSE(audit::Filter::from_json(json{{"event_kind", "bogus"}}).ok());
  CHECK_FALSE(audit::Filter::from_json(json::array()).ok());
}

TEST_CASE("corrupt NDJSON lines are rejected on load") {
  auto path = temp_path("corrupt");
  {
    auto log = audit::AuditLog::open(path);
    REQUIRE(log.ok());
    for (int i = 0; i < 3; ++i)
      REQUIRE(log.value()
                  .append(audit::EventKind::issue, "op1.example!a", {},
                          std::nullopt, 1700000000 + i)
                  .ok());
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{not json\n";
  }
  CHECK_FALSE(audit::load_records(path).ok());
  CHECK_FALSE(audit::AuditLog::open(path).ok());
  std::filesystem::remove(path);
}
