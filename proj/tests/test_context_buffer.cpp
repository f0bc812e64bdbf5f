#include <sstream>
#include <thread>

#include "acegrpo/context_buffer.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace acegrpo;
using test_support::fail;
using test_support::ok;

TEST_CASE("new buffer holds one draft per instance") {
  const auto seeds = test_support::instances(134);
  EvolvingBuffer buffer(seeds, 0.05);
  CHECK(buffer.size() == 134);
  CHECK(buffer.count(TaskKind::Draft) == 134);
  CHECK(buffer.iteration() == 0);
  for (const auto& s : buffer.states()) {
    CHECK(s.kind == TaskKind::Draft);
    CHECK(s.depth() == 0);
    CHECK(s.potential == 0.05);
    CHECK(s.visit_times.empty());
    CHECK_FALSE(s.code.has_value());
  }
}

TEST_CASE("single instance buffer") {
  const auto seeds = test_support::instances(1);
  EvolvingBuffer buffer(seeds, 0.05);
  CHECK(buffer.size() == 1);
  const auto s = buffer.get(StateId{0});
  CHECK(s.kind == TaskKind::Draft);
  CHECK(s.depth() == 0);
}

TEST_CASE("duplicate seed instance id is rejected with the id") {
  auto seeds = test_support::instances(3);
  seeds[2].id = seeds[0].id;
  try {
    EvolvingBuffer buffer(seeds, 0.05);
    FAIL("expected DuplicateIdError");
  } catch (const DuplicateIdError& e) {
    CHECK(e.id() == "inst-0");
  }
  CHECK_THROWS_AS(EvolvingBuffer(std::span<const TaskInstance>{}, 0.05), std::invalid_argument);
}

TEST_CASE("classify_kind") {
  CHECK(classify_kind(false, std::nullopt) == TaskKind::Draft);
  CHECK(classify_kind(true, fail()) == TaskKind::Debug);
  CHECK(classify_kind(true, ok()) == TaskKind::Improve);
  CHECK_THROWS_AS(classify_kind(true, std::nullopt), std::logic_error);
  CHECK_THROWS_AS(classify_kind(false, ok()), std::logic_error);
}

TEST_CASE("transition spawns derived states") {
  const auto root = test_support::draft();

  SUBCASE("failed execution gives a Debug child") {
    const auto child = transition(root, 11, fail(), -1.0, 0.05);
    CHECK(child.kind == TaskKind::Debug);
    CHECK(child.depth() == 1);
    CHECK(child.history.size() == 1);
    CHECK(child.code == SolutionId{11});
    CHECK(child.potential == 0.05);
    CHECK(child.visit_times.empty());
    CHECK(child.instance == root.instance);
    CHECK_FALSE(child.state_id.assigned());
  }
  SUBCASE("success carries the new score as baseline") {
    const auto child = transition(root, 12, ok(), 0.6, 0.05);
    CHECK(child.kind == TaskKind::Improve);
    CHECK(child.history.back().score == 0.6);
  }
  SUBCASE("three-step chain replays field by field") {
    const auto a = transition(root, 1, ok(), 0.2, 0.05);
    const auto b = transition(a, 2, ok(), 0.4, 0.05);
    REQUIRE(b.kind == TaskKind::Improve);
    REQUIRE(b.depth() == 2);
    const auto c = transition(b, 3, ok(), 0.5, 0.05);
    CHECK(c.kind == TaskKind::Improve);
    CHECK(c.depth() == 3);
    const std::vector<HistoryEntry> expected = {
        {1, ok(), 0.2}, {2, ok(), 0.4}, {3, ok(), 0.5}};
    CHECK(c.history == expected);
    CHECK(c.code == SolutionId{3});
  }
  SUBCASE("inconsistent score and feedback are rejected") {
    CHECK_THROWS_AS(transition(root, 1, fail(), 0.3, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(transition(root, 1, ok(), -1.0, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(transition(root, 1, ok(), 1.5, 0.05), std::invalid_argument);
    ExecFeedback bad{false, ErrorClass::None, 0};
    CHECK_THROWS_AS(transition(root, 1, bad, -1.0, 0.05), std::invalid_argument);
  }
}

TEST_CASE("append assigns ids, counts kinds and round-trips") {
  const auto seeds = test_support::instances(134);
  EvolvingBuffer buffer(seeds, 0.05);
  const auto parent = buffer.get(StateId{0});
  const auto id = buffer.append(transition(parent, 1, fail(), -1.0, 0.05));
  CHECK(buffer.size() == 135);
  CHECK(buffer.count(TaskKind::Debug) == 1);
  CHECK(buffer.iteration() == 0);
  const auto back = buffer.get(id);
  CHECK(back.state_id == id);
  CHECK(back.history == transition(parent, 1, fail(), -1.0, 0.05).history);

  for (int i = 0; i < 8; ++i) buffer.append(transition(parent, 100 + i, ok(), 0.3, 0.05));
  CHECK(buffer.size() == 143);
  CHECK(buffer.count(TaskKind::Improve) == 8);

  auto dup = transition(parent, 5, ok(), 0.3, 0.05);
  dup.state_id = id;
  CHECK_THROWS_AS(buffer.append(dup), DuplicateIdError);
  CHECK(buffer.size() == 143);
}

TEST_CASE("record_visit window and ordering") {
  const auto seeds = test_support::instances(2);
  EvolvingBuffer buffer(seeds, 0.05);
  buffer.record_visit(StateId{0}, 5);
  CHECK(buffer.get(StateId{0}).visit_times == std::vector<std::int64_t>{5});

  buffer.record_visit(StateId{1}, 3);
  buffer.record_visit(StateId{1}, 7);
  CHECK(buffer.get(StateId{1}).last_visit() == 7);

  for (std::int64_t t = 10; t < 30; ++t) buffer.record_visit(StateId{0}, t);
  const auto v = buffer.get(StateId{0}).visit_times;
  CHECK(v.size() == 20);
  CHECK(v.front() == 10);
  CHECK(v.back() == 29);

  CHECK_THROWS_AS(buffer.record_visit(StateId{0}, 29), std::invalid_argument);
  CHECK_THROWS_AS(buffer.record_visit(StateId{42}, 40), std::out_of_range);
  buffer.advance_iteration(50);
  CHECK_THROWS_AS(buffer.record_visit(StateId{1}, 49), std::invalid_argument);
}

TEST_CASE("property: random lineages keep every invariant") {
  std::mt19937_64 rng(99);
  const auto seeds = test_support::instances(5);
  EvolvingBuffer buffer(seeds, 0.05);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int step = 0; step < 2000; ++step) {
    const auto size_before = buffer.size();
    const StateId parent_id{std::uniform_int_distribution<std::uint64_t>(0, size_before - 1)(rng)};
    const auto parent = buffer.get(parent_id);
    const bool success = unit(rng) < 0.5;
    const auto child = success ? transition(parent, step, ok(), unit(rng), 0.05)
                               : transition(parent, step, fail(), -1.0, 0.05);
    const auto id = buffer.append(child);
    REQUIRE(buffer.size() == size_before + 1);
    const auto stored = buffer.get(id);
    REQUIRE(stored.depth() == parent.depth() + 1);
    REQUIRE(std::equal(parent.history.begin(), parent.history.end(), stored.history.begin()));
  }
  std::size_t drafts = 0;
  buffer.for_each([&](const ContextState& s) {
    CHECK_FALSE(check_invariants(s).has_value());
    const auto kind = classify_kind(s.code.has_value(),
                                    s.history.empty() ? std::nullopt
                                                      : std::optional(s.history.back().feedback));
    CHECK(kind == s.kind);
    if (s.visit_times.empty()) CHECK(s.potential == 0.05);
    drafts += s.kind == TaskKind::Draft ? 1 : 0;
  });
  CHECK(drafts == 5);
}

TEST_CASE("check_invariants flags broken states") {
  auto s = transition(test_support::draft(), 1, ok(), 0.4, 0.05);
  CHECK_FALSE(check_invariants(s).has_value());
  auto wrong_kind = s;
  wrong_kind.kind = TaskKind::Debug;
  CHECK(check_invariants(wrong_kind).has_value());
  auto bad_visits = s;
  bad_visits.visit_times = {3, 3};
  CHECK(check_invariants(bad_visits).has_value());
  auto negative = s;
  negative.potential = -0.1;
  CHECK(check_invariants(negative).has_value());
}

TEST_CASE("concurrent appends and snapshots see consistent prefixes") {
  const auto seeds = test_support::instances(10);
  EvolvingBuffer buffer(seeds, 0.05);
  const auto parent = buffer.get(StateId{0});
  constexpr int kWriters = 4;
  constexpr int kPerWriter = 500;
  std::atomic<bool> done{false};
  std::atomic<int> bad_snapshots{0};
  std::thread reader([&] {
    std::size_t last = 0;
    while (!done) {
      const auto snap = buffer.snapshot();
      if (snap.size() < last) ++bad_snapshots;
      for (std::size_t i = 0; i < snap.size(); ++i) {
        if (snap.states[i].id.value != i) ++bad_snapshots;
      }
      last = snap.size();
    }
  });
  {
    std::vector<std::jthread> writers;
    for (int w = 0; w < kWriters; ++w) {
      writers.emplace_back([&, w] {
        for (int i = 0; i < kPerWriter; ++i) {
          buffer.append(transition(parent, w * kPerWriter + i, fail(), -1.0, 0.05));
        }
      });
    }
  }
  done = true;
  reader.join();
  CHECK(bad_snapshots == 0);
  CHECK(buffer.size() == 10 + kWriters * kPerWriter);
  CHECK(buffer.count(TaskKind::Debug) == kWriters * kPerWriter);
}

TEST_CASE("buffer records serialize and parse back") {
  const auto seeds = test_support::instances(2);
  EvolvingBuffer buffer(seeds, 0.05);
  const auto a = buffer.append(transition(buffer.get(StateId{0}), 7, fail(9), -1.0, 0.05));
  buffer.append(transition(buffer.get(a), 8, ok(), 0.25, 0.05));
  buffer.record_visit(a, 3);
  buffer.set_potential(a, 0.4, 0.1);

  std::stringstream ss;
  write_buffer_records(ss, buffer);
  const auto records = read_buffer_records(ss);
  REQUIRE(records.size() == 4);
  CHECK(records[2].state_id == a.value);
  CHECK(records[2].kind == TaskKind::Debug);
  CHECK(records[2].potential == 0.4);
  CHECK(records[2].visit_times == std::vector<std::int64_t>{3});
  CHECK(records[2].history == buffer.get(a).history);
  CHECK(records[3].depth == 2);
  CHECK(records[3].instance_id == "inst-0");
}
