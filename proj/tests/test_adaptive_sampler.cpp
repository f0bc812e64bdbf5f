#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "acegrpo/adaptive_sampler.hpp"
#include "acegrpo/learnability.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace acegrpo;

namespace {

StateSummary summary(std::uint64_t id, TaskKind kind, double potential, std::size_t depth = 0,
                     std::vector<std::int64_t> visits = {}) {
  StateSummary s;
  s.id = StateId{id};
  s.kind = kind;
  s.potential = potential;
  s.depth = depth;
  s.visit_times = std::move(visits);
  return s;
}

BufferSnapshot random_pool(std::mt19937_64& rng, std::size_t n, std::int64_t t) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BufferSnapshot snap;
  snap.iteration = t;
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = kAllKinds[rng() % 3];
    // Coarse potentials so ties happen.
    const double potential = std::round(unit(rng) * 4.0) / 4.0;
    const std::size_t depth = kind == TaskKind::Draft ? 0 : 1 + rng() % 3;
    std::vector<std::int64_t> visits;
    std::int64_t v = -static_cast<std::int64_t>(rng() % 4);
    while (true) {
      v += 1 + static_cast<std::int64_t>(rng() % 6);
      if (v >= t) break;
      if (unit(rng) < 0.5) visits.push_back(v);
    }
    snap.states.push_back(summary(i, kind, potential, depth, visits));
  }
  return snap;
}

std::vector<oracle::PoolState> to_pool(const BufferSnapshot& snap) {
  std::vector<oracle::PoolState> pool;
  for (const auto& s : snap.states) {
    pool.push_back({static_cast<int>(index_of(s.kind)), s.depth, s.potential, s.visit_times});
  }
  return pool;
}

oracle::SamplerKnobs knobs(const StageParams& p, const SamplerConfig& c) {
  oracle::SamplerKnobs k;
  k.rho = p.focusing_rho;
  k.floor = p.min_weight_ratio;
  k.eps = p.exploration_eps;
  k.top = p.top_percentile;
  k.hard_block = p.hard_block;
  k.gamma = c.cooling.gamma;
  k.eta = c.cooling.eta;
  k.mult[0] = c.type_weights.draft;
  k.mult[1] = c.type_weights.debug;
  k.mult[2] = c.type_weights.improve;
  k.uniform = c.mode == SamplerMode::Uniform;
  return k;
}

}  // namespace

TEST_CASE("stage thresholds") {
  const StageSchedule s;
  CHECK(s.stage_of(134) == Stage::Early);
  CHECK(s.stage_of(199) == Stage::Early);
  CHECK(s.stage_of(200) == Stage::Mid);
  CHECK(s.stage_of(999) == Stage::Mid);
  CHECK(s.stage_of(1000) == Stage::Late);
  CHECK(stage_for(134, s).focusing_rho == 2.0);
  CHECK(stage_for(200, s).focusing_rho == 3.5);
  CHECK(stage_for(1000, s).focusing_rho == 5.0);
  CHECK(stage_for(5000, s).top_percentile == 0.4);
  StageSchedule bad;
  bad.late_threshold = 200;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("ranks within kind") {
  std::vector<StateSummary> s = {summary(0, TaskKind::Draft, 0.9), summary(1, TaskKind::Draft, 0.5),
                                 summary(2, TaskKind::Draft, 0.1)};
  CHECK(ranks_within_kind(s) == std::vector<double>{0.0, 0.5, 1.0});

  s = {summary(0, TaskKind::Debug, 0.3, 1)};
  CHECK(ranks_within_kind(s) == std::vector<double>{0.0});

  s = {summary(0, TaskKind::Improve, 0.4, 2), summary(1, TaskKind::Improve, 0.4, 1)};
  CHECK(ranks_within_kind(s) == std::vector<double>{1.0, 0.0});

  s = {summary(0, TaskKind::Improve, 0.4, 1), summary(1, TaskKind::Improve, 0.4, 1)};
  CHECK(ranks_within_kind(s) == std::vector<double>{0.0, 1.0});

  // Kinds rank independently.
  s = {summary(0, TaskKind::Draft, 0.1), summary(1, TaskKind::Debug, 0.05, 1),
       summary(2, TaskKind::Draft, 0.2)};
  CHECK(ranks_within_kind(s) == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("base weight") {
  StageParams p;
  for (double rho : {0.0, 2.0, 5.0}) {
    p.focusing_rho = rho;
    CHECK(base_weight(0.0, p) == 1.0);
  }
  p.focusing_rho = 0.0;
  CHECK(base_weight(0.7, p) == 1.0);
  CHECK(base_weight(1.0, p) == 1.0);
  p.focusing_rho = 2.0;
  CHECK(base_weight(0.5, p) == 0.25);
  CHECK(base_weight(1.0, p) == p.min_weight_ratio);
  CHECK_THROWS_AS(base_weight(1.2, p), std::invalid_argument);
}

TEST_CASE("cooling") {
  const CoolingParams cp;
  StageParams p;
  p.hard_block = 2;
  CHECK(cooling({}, 10, p, cp) == 1.0);
  const std::vector<std::int64_t> recent{9};
  CHECK(cooling(recent, 10, p, cp) == 0.0);
  const std::vector<std::int64_t> three_ago{7};
  CHECK(cooling(three_ago, 10, p, cp) == doctest::Approx(1.0 - 0.3 * 0.729).epsilon(1e-15));
  CHECK(cooling(three_ago, 10, p, cp) == doctest::Approx(0.7813).epsilon(1e-15));
}

TEST_CASE("type multipliers, degenerate mixing and focusing on a small pool") {
  SamplerConfig c;
  c.schedule.early.exploration_eps = 0.0;
  BufferSnapshot snap;
  snap.states = {summary(0, TaskKind::Draft, 0.3), summary(1, TaskKind::Debug, 0.3, 1),
                 summary(2, TaskKind::Draft, 0.3), summary(3, TaskKind::Improve, 0.3, 1)};
  c.schedule.early.focusing_rho = 0.0;
  auto d = build_distribution(snap, 1, c);
  REQUIRE(d);
  CHECK(d->probs[0] == doctest::Approx(2.0 * d->probs[1]).epsilon(1e-15));
  CHECK(d->probs[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(d->probs[3] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  c.schedule.early.exploration_eps = 1.0;
  c.schedule.early.focusing_rho = 5.0;
  d = build_distribution(snap, 1, c);
  for (double q : d->probs) CHECK(q == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("late stage: frontier state takes almost all non-exploration mass") {
  SamplerConfig c;
  c.schedule.late.exploration_eps = 0.0;
  BufferSnapshot snap;
  // Fill past the late threshold with blocked filler so the pool is just two states.
  snap.states = {summary(0, TaskKind::Improve, 0.0, 1), summary(1, TaskKind::Improve, 0.75, 1)};
  for (std::uint64_t i = 2; i < 1000; ++i) {
    snap.states.push_back(summary(i, TaskKind::Debug, 0.5, 1, {100}));
  }
  c.schedule.late.top_percentile = 1.0;
  const auto d = build_distribution(snap, 101, c);
  REQUIRE(d);
  CHECK(d->stage == Stage::Late);
  REQUIRE(d->size() == 2);
  CHECK(d->probs[1] >= 0.99);
  CHECK(d->probs[1] == doctest::Approx(1.0 / 1.001).epsilon(1e-14));
}

TEST_CASE("all states blocked yields no distribution") {
  SamplerConfig c;
  BufferSnapshot snap;
  snap.states = {summary(0, TaskKind::Draft, 0.3, 0, {4}), summary(1, TaskKind::Draft, 0.3, 0, {5})};
  CHECK_FALSE(build_distribution(snap, 5, c).has_value());
  CHECK(build_distribution(snap, 7, c).has_value());
}

TEST_CASE("property: distribution equals brute-force evaluator") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const std::int64_t t = 5 + static_cast<std::int64_t>(rng() % 30);
    auto snap = random_pool(rng, n, t);
    SamplerConfig c;
    c.mode = trial % 7 == 0 ? SamplerMode::Uniform : SamplerMode::Adaptive;
    // Small pools with thresholds moved so every stage is exercised.
    c.schedule.mid_threshold = 4;
    c.schedule.late_threshold = 8;
    const auto stage = c.schedule.params(c.schedule.stage_of(n));
    const auto expected = oracle::distribution(to_pool(snap), t, knobs(stage, c));
    const auto d = build_distribution(snap, t, c);
    if (expected.empty()) {
      CHECK_FALSE(d.has_value());
      continue;
    }
    REQUIRE(d.has_value());
    std::vector<double> got(n, 0.0);
    for (std::size_t e = 0; e < d->size(); ++e) got[d->snapshot_index[e]] = d->probs[e];
    for (std::size_t i = 0; i < n; ++i) CHECK(oracle::rel_error(got[i], expected[i]) < 1e-12);
  }
}

TEST_CASE("property: normalization, refractory block, starvation floor") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    const std::int64_t t = 10 + static_cast<std::int64_t>(rng() % 20);
    const auto snap = random_pool(rng, n, t);
    SamplerConfig c;
    c.schedule.mid_threshold = 10;
    c.schedule.late_threshold = 25;
    const auto& stage = c.schedule.params(c.schedule.stage_of(n));
    const auto d = build_distribution(snap, t, c);
    if (!d) continue;
    const double total = std::accumulate(d->probs.begin(), d->probs.end(), 0.0);
    CHECK(std::abs(total - 1.0) < 1e-9);
    for (std::size_t e = 0; e < d->size(); ++e) {
      const auto& s = snap.states[d->snapshot_index[e]];
      CHECK(d->probs[e] >= 0.0);
      if (!s.visit_times.empty()) CHECK(t - s.visit_times.back() > stage.hard_block);
      CHECK(d->probs[e] >= stage.exploration_eps / static_cast<double>(d->size()) * (1 - 1e-12));
    }
  }
}

TEST_CASE("property: raising rho shifts mass toward the best state") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    BufferSnapshot snap;
    const std::size_t n = 2 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) snap.states.push_back(summary(i, TaskKind::Draft, unit(rng)));
    const auto ranks = ranks_within_kind(snap.states);
    const auto best = static_cast<std::size_t>(std::find(ranks.begin(), ranks.end(), 0.0) - ranks.begin());
    const auto worst = static_cast<std::size_t>(std::find(ranks.begin(), ranks.end(), 1.0) - ranks.begin());
    SamplerConfig c;
    c.schedule.early.exploration_eps = 0.0;
    c.schedule.early.focusing_rho = 0.0;
    const double worst_at_zero = build_distribution(snap, 1, c)->probs[worst];
    double prev_best = 0.0;
    for (double rho : {0.0, 0.5, 1.0, 2.0, 3.5, 5.0, 8.0}) {
      c.schedule.early.focusing_rho = rho;
      const auto d = build_distribution(snap, 1, c);
      CHECK(d->probs[best] >= prev_best - 1e-15);
      prev_best = d->probs[best];
      // The floored worst state can only gain through a shrinking normalizer.
      CHECK(d->probs[worst] <= worst_at_zero + 1e-15);
      if (rho > 0.0) {
        CHECK(d->probs[worst] == doctest::Approx(c.schedule.early.min_weight_ratio * d->probs[best]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("collapse pool: late-stage frontier mass") {
  // 50 mastered, 50 intractable and 10 frontier Improve states whose potentials come
  // from their actual reward groups.
  const auto seeds = std::vector<TaskInstance>(1, TaskInstance{"t", {}, 0.5, "m", "b"});
  EvolvingBuffer buffer(seeds, 0.05);
  const auto root = buffer.get(StateId{0});
  const PotentialParams pp;
  std::vector<StateId> frontier;
  for (int i = 0; i < 110; ++i) {
    const auto id = buffer.append(transition(root, i, ExecFeedback::success(), 0.3, 0.05));
    std::vector<double> rewards(8, i < 50 ? 1.0 : 0.0);
    if (i >= 100) {
      std::fill(rewards.begin(), rewards.begin() + 1 + (i % 3), 1.0);
      frontier.push_back(id);
    }
    update_potential(buffer, id, rewards, pp);
  }
  auto snap = buffer.snapshot();
  snap.states.erase(snap.states.begin());  // drop the seed draft

  SamplerConfig c;
  c.schedule.mid_threshold = 50;
  c.schedule.late_threshold = 100;
  const auto d = build_distribution(snap, 1, c);
  REQUIRE(d);
  CHECK(d->stage == Stage::Late);
  double mass = 0.0;
  for (std::size_t e = 0; e < d->size(); ++e) {
    if (std::find(frontier.begin(), frontier.end(), d->ids[e]) != frontier.end()) mass += d->probs[e];
  }
  CHECK(mass >= 5.0 * 10.0 / 110.0);
  CHECK(diagnose(*d, snap).frontier_mass == doctest::Approx(mass).epsilon(1e-12));

  c.mode = SamplerMode::Uniform;
  const auto u = build_distribution(snap, 1, c);
  CHECK(diagnose(*u, snap).frontier_mass == doctest::Approx(10.0 / 110.0).epsilon(1e-12));
}

TEST_CASE("sample_batch") {
  SamplingDistribution d;
  for (std::uint64_t i = 0; i < 5; ++i) {
    d.ids.push_back(StateId{i});
    d.probs.push_back(0.2);
    d.snapshot_index.push_back(i);
  }
  auto all = sample_batch(d, 5, std::uint64_t{1});
  std::sort(all.begin(), all.end());
  CHECK(all == d.ids);
  CHECK(sample_batch(d, 3, std::uint64_t{9}) == sample_batch(d, 3, std::uint64_t{9}));
  CHECK_THROWS_AS(sample_batch(d, 6, std::uint64_t{1}), std::invalid_argument);
  d.probs = {0.5, 0.5, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(sample_batch(d, 3, std::uint64_t{1}), std::invalid_argument);

  SamplingDistribution three;
  three.ids = {StateId{0}, StateId{1}, StateId{2}};
  three.probs = {0.5, 0.3, 0.2};
  three.snapshot_index = {0, 1, 2};
  std::mt19937_64 rng(123);
  std::array<int, 3> counts{};
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) ++counts[sample_batch(three, 1, rng)[0].value];
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = three.probs[i];
    const double sigma = std::sqrt(kDraws * p * (1 - p));
    CHECK(std::abs(counts[i] - kDraws * p) <= 3 * sigma);
  }
}
