#include <filesystem>
#include <fstream>
#include <sstream>

#include "acegrpo/train_harness.hpp"
#include "doctest.h"

using namespace acegrpo;
namespace fs = std::filesystem;

namespace {

RunConfig small_run(std::int64_t steps) {
  RunConfig c;
  c.total_steps = steps;
  c.workers = 2;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("acegrpo-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string records_text(const RunResult& r) {
  std::string text;
  for (const auto& m : r.metrics) text += to_json_line(m) + '\n';
  return text;
}

}  // namespace

TEST_CASE("config parsing, validation and round trip") {
  std::istringstream in(
      "# comment line\n"
      "run.total_steps = 12   # trailing comment\n"
      "run.seed = 99\n"
      "sampler.mode = uniform\n"
      "sampler.late.rho = 4.5\n"
      "reward.alpha = 0.25\n"
      "run.budget_ticks = 5000\n"
      "env.quality_levels = 0.2, 0.5, 0.9\n");
  const auto c = parse_config(in);
  CHECK(c.total_steps == 12);
  CHECK(c.seed == 99);
  CHECK(c.sampler.mode == SamplerMode::Uniform);
  CHECK(c.sampler.schedule.late.focusing_rho == 4.5);
  CHECK(c.reward.alpha_improve == 0.25);
  CHECK(c.execution_budget_ticks == 5000);
  CHECK(c.env.quality_levels == std::vector<double>{0.2, 0.5, 0.9});
  CHECK_NOTHROW(c.validate());

  std::istringstream again(to_config_text(c));
  const auto back = parse_config(again);
  CHECK(to_config_text(back) == to_config_text(c));

  std::istringstream unknown("run.seed = 1\nrun.bogus = 3\n");
  try {
    parse_config(unknown);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream malformed("run.total_steps = twelve\n");
  CHECK_THROWS_AS(parse_config(malformed), std::invalid_argument);

  RunConfig bad;
  bad.global_batch = 32;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = RunConfig{};
  bad.grpo.group_size = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = RunConfig{};
  bad.execution_budget_ticks = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("metrics writer with zero steps leaves only headers") {
  const auto dir = scratch_dir("empty");
  emit_metrics(dir, std::span<const StepMetrics>{});
  const auto jsonl = lines_of(dir / "metrics.jsonl");
  const auto csv = lines_of(dir / "metrics.csv");
  REQUIRE(jsonl.size() == 1);
  CHECK(jsonl[0] == "{\"format\":\"acegrpo-metrics\",\"version\":1}");
  REQUIRE(csv.size() == 1);
  CHECK(csv[0] == csv_header());
  fs::remove_all(dir);
}

TEST_CASE("metrics rows have one field per header column") {
  StepMetrics m;
  m.step = 3;
  m.valid_rate[0] = 0.5;
  m.mean_reward = 0.25;
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  CHECK(count(to_csv_row(m)) == count(csv_header()));
  CHECK(to_json_line(m).find("\"step\":3") != std::string::npos);
}

TEST_CASE("ten-step smoke run") {
  const auto r = run_training(small_run(10));
  CHECK(r.seed_states == 134);
  CHECK(r.executions == 640);
  CHECK(r.final_states.size() == 774);
  REQUIRE(r.metrics.size() == 10);
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    CHECK(r.metrics[i].step == static_cast<std::int64_t>(i + 1));
    CHECK(r.metrics[i].executions == 64);
    CHECK(r.metrics[i].buffer_size == 134 + 64 * (i + 1));
    CHECK(r.metrics[i].update_applied);
    CHECK(r.metrics[i].policy_version == static_cast<std::int64_t>(i + 1));
  }
  for (std::size_t i = 0; i < r.final_states.size(); ++i) {
    const auto& s = r.final_states[i];
    CHECK(s.state_id.value == i);
    CHECK_FALSE(check_invariants(s).has_value());
    if (i < 134) CHECK(s.kind == TaskKind::Draft);
  }
}

TEST_CASE("conservation: every execution yields exactly one stored child") {
  const auto r = run_training(small_run(25));
  std::size_t executions = 0;
  std::int64_t ticks = 0;
  for (const auto& m : r.metrics) {
    executions += m.executions;
    ticks += m.ticks_step;
    CHECK(m.ticks_total == ticks);
  }
  CHECK(executions == r.executions);
  CHECK(r.children_appended == r.executions);
  CHECK(r.final_states.size() == r.seed_states + r.children_appended);
  CHECK(ticks == r.ticks_total);
}

TEST_CASE("execution budget bounds the spend") {
  auto c = small_run(400);
  c.execution_budget_ticks = 6000;
  const auto r = run_training(c);
  CHECK(r.budget_exhausted);
  CHECK(r.ticks_total >= 6000);
  CHECK(r.ticks_total < 6000 + r.max_tick_cost);
  CHECK(r.metrics.size() < 400);
  CHECK(r.final_states.size() == r.seed_states + r.executions);
}

TEST_CASE("runs are reproducible") {
  const auto a = run_training(small_run(30));
  const auto b = run_training(small_run(30));
  CHECK(records_text(a) == records_text(b));
  CHECK(a.final_params == b.final_params);
  REQUIRE(a.final_states.size() == b.final_states.size());
  for (std::size_t i = 0; i < a.final_states.size(); ++i) {
    CHECK(a.final_states[i].history == b.final_states[i].history);
    CHECK(a.final_states[i].potential == b.final_states[i].potential);
    CHECK(a.final_states[i].visit_times == b.final_states[i].visit_times);
  }
  auto other = small_run(30);
  other.seed = 2;
  CHECK(records_text(run_training(other)) != records_text(a));

  // Worker count only changes scheduling.
  auto one_worker = small_run(30);
  one_worker.workers = 1;
  CHECK(records_text(run_training(one_worker)) == records_text(a));
}

TEST_CASE("pipelined learner keeps staleness bounded and conserves states") {
  auto c = small_run(30);
  c.pipelined_learner = true;
  const auto r = run_training(c);
  REQUIRE(r.metrics.size() == 30);
  CHECK(r.final_states.size() == 134 + 30 * 64);
  for (const auto& m : r.metrics) CHECK(m.update_applied);
  CHECK(r.final_version == 30);
  CHECK(records_text(run_training(c)) == records_text(r));
}

TEST_CASE("nondeterministic commits still conserve states") {
  auto c = small_run(15);
  c.deterministic = false;
  c.workers = 4;
  const auto r = run_training(c);
  CHECK(r.final_states.size() == 134 + 15 * 64);
  for (std::size_t i = 0; i < r.final_states.size(); ++i) {
    CHECK(r.final_states[i].state_id.value == i);
    CHECK_FALSE(check_invariants(r.final_states[i]).has_value());
  }
}

TEST_CASE("no-buffer arm keeps only the seed drafts") {
  const auto c = arm_config(small_run(20), Arm::NoBuffer, 1);
  const auto r = run_training(c);
  for (const auto& m : r.metrics) CHECK(m.buffer_size == 134);
  CHECK(r.final_states.size() == 134);
  CHECK(r.children_appended == 0);
  CHECK(arm_config(small_run(20), Arm::Uniform, 1).sampler.mode == SamplerMode::Uniform);
  CHECK(arm_config(small_run(20), Arm::Full, 7).seed == 7);
}

TEST_CASE("paired one-sided t-test") {
  const std::vector<double> a{1, 2, 4, 5, 7};
  const std::vector<double> b{0, 1, 2, 3, 4};
  const auto cmp = paired_one_sided(a, b);
  CHECK(cmp.mean_difference == doctest::Approx(1.8));
  CHECK(cmp.t_statistic == doctest::Approx(4.810702354423639).epsilon(1e-12));
  CHECK(cmp.p_value == doctest::Approx(0.00429045936096239).epsilon(1e-9));
  CHECK(cmp.wins == 5);
  const auto reversed = paired_one_sided(b, a);
  CHECK(reversed.p_value == doctest::Approx(1.0 - 0.00429045936096239).epsilon(1e-9));
  const std::vector<double> c{1, 2, 3};
  CHECK(paired_one_sided(c, c).p_value == 0.5);
  CHECK_THROWS_AS(paired_one_sided(c, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("smoothing helpers") {
  std::vector<StepMetrics> m(5);
  for (std::size_t i = 0; i < m.size(); ++i) m[i].eval_reward = static_cast<double>(i);
  CHECK(final_smoothed_reward(m, 2) == 3.5);
  CHECK(final_smoothed_reward(m, 50) == 2.0);
  const auto curve = smoothed_eval_curve(m, 2);
  CHECK(curve == std::vector<double>{0.0, 0.5, 1.5, 2.5, 3.5});
}
