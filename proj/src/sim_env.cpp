#include "acegrpo/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace acegrpo {

namespace {

constexpr const char* kSuiteFormat = "acegrpo-suite";
constexpr int kSuiteVersion = 1;

std::string padded(const char* prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return prefix + digits;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

void EnvParams::validate() const {
  if (quality_levels.size() < 2) throw std::invalid_argument("need at least two quality levels");
  for (double q : quality_levels) {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quality levels must lie in [0,1]");
  }
  if (!std::is_sorted(quality_levels.begin(), quality_levels.end())) {
    throw std::invalid_argument("quality levels must be sorted ascending");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (!(debug_rescue_bonus >= 0.0 && debug_rescue_bonus <= 1.0)) {
    throw std::invalid_argument("debug rescue bonus must lie in [0,1]");
  }
  if (!(improve_gain >= 0.0 && improve_gain <= 1.0)) {
    throw std::invalid_argument("improve gain must lie in [0,1]");
  }
  if (!(min_ticks >= 2.0 && max_ticks >= min_ticks)) {
    throw std::invalid_argument("tick range must satisfy 2 <= min_ticks <= max_ticks");
  }
}

std::vector<SyntheticTask> make_task_suite(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("task suite needs at least one task");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::size_t> strata(n);
  std::iota(strata.begin(), strata.end(), std::size_t{0});
  std::shuffle(strata.begin(), strata.end(), rng);

  std::vector<SyntheticTask> suite;
  suite.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticTask task;
    task.difficulty = (static_cast<double>(strata[i]) + unit(rng)) / static_cast<double>(n);
    task.fragility = std::clamp(0.75 * task.difficulty * task.difficulty + 0.15 * unit(rng), 0.0, 1.0);
    task.ceiling = 0.55 + 0.45 * unit(rng);

    const double human_center = 0.3 + 0.3 * unit(rng);
    std::vector<double> humans(kLeaderboardSize);
    for (double& h : humans) h = std::clamp(human_center + 0.12 * normal(rng), 0.0, 1.0);
    task.leaderboard = Leaderboard(std::move(humans));

    TaskInstance instance;
    instance.id = padded("task-", i);
    instance.description_features.resize(kDescriptionDim);
    for (double& f : instance.description_features) f = normal(rng);
    instance.difficulty = task.difficulty;
    instance.metric_id = "metric-" + std::to_string(i % 3);
    instance.leaderboard_id = padded("board-", i);
    task.instance = std::make_shared<const TaskInstance>(std::move(instance));
    suite.push_back(std::move(task));
  }
  return suite;
}

double failure_probability(const SyntheticTask& task, TaskKind kind, double quality,
                           const EnvParams& env) {
  const double rescue = kind == TaskKind::Debug ? env.debug_rescue_bonus * quality : 0.0;
  return std::clamp(task.fragility + task.difficulty * (1.0 - quality) - rescue, 0.0,
                    kMaxFailureProbability);
}

double performance_mean(const SyntheticTask& task, const ContextState& state, double quality,
                        const EnvParams& env) {
  const double progress = state.kind == TaskKind::Improve ? prior_score(state) : 0.0;
  return task.ceiling *
         (quality * (1.0 - 0.5 * task.difficulty) + env.improve_gain * progress);
}

ExecOutcome execute(const SyntheticTask& task, const ContextState& x, std::size_t action,
                    const EnvParams& env, std::mt19937_64& rng) {
  if (action >= env.num_actions()) {
    throw std::out_of_range("action " + std::to_string(action) + " outside [0, " +
                            std::to_string(env.num_actions()) + ")");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double u_fail = unit(rng);
  const double z = normal(rng);
  const double u_latency = unit(rng);
  const double u_error = unit(rng);
  const double u_detail = unit(rng);

  const double quality = env.quality_levels[action];
  const bool failed = u_fail < failure_probability(task, x.kind, quality, env);

  ExecOutcome out;
  double lo = env.min_ticks;
  double hi = env.max_ticks;
  if (failed) {
    lo *= 0.5;
    hi *= 0.5;
    const auto error = u_error < 0.5 ? ErrorClass::RuntimeError : ErrorClass::InvalidSubmission;
    out.feedback = ExecFeedback::failure(error, 1 + static_cast<int>(u_detail * 20.0));
    out.raw_score = kInvalidScore;
  } else {
    const double perf = std::clamp(
        performance_mean(task, x, quality, env) + env.noise_sigma * z, 0.0, task.ceiling);
    out.feedback = ExecFeedback::success();
    out.performance = perf;
    out.raw_score = humanrank(perf, task.leaderboard);
  }
  const double ticks = std::exp(std::log(lo) + u_latency * (std::log(hi) - std::log(lo)));
  out.latency_ticks = std::max(1, static_cast<int>(std::lround(ticks)));
  return out;
}

int tick_cost(const ExecOutcome& outcome) { return outcome.latency_ticks; }

double expected_shaped_reward(const SyntheticTask& task, const ContextState& x,
                              std::size_t action, const EnvParams& env,
                              const RewardParams& reward) {
  if (action >= env.num_actions()) throw std::out_of_range("action index out of range");
  const double quality = env.quality_levels[action];
  const double p_fail = failure_probability(task, x.kind, quality, env);
  const double baseline = prior_score(x);
  const auto value_at = [&](double perf) {
    return shaped_reward(humanrank(perf, task.leaderboard), baseline, reward);
  };
  const double mean = performance_mean(task, x, quality, env);
  const double ceiling = task.ceiling;

  double success_value = 0.0;
  if (env.noise_sigma == 0.0) {
    success_value = value_at(std::clamp(mean, 0.0, ceiling));
  } else {
    const auto cdf = [&](double v) { return normal_cdf((v - mean) / env.noise_sigma); };
    // Clamped atoms at 0 and at the ceiling.
    success_value += cdf(0.0) * value_at(0.0);
    success_value += (1.0 - cdf(ceiling)) * value_at(ceiling);
    // humanrank is constant on [b_j, b_{j+1}) between distinct leaderboard scores.
    std::vector<double> cuts{0.0};
    for (double h : task.leaderboard.scores()) {
      if (h > 0.0 && h < ceiling && h != cuts.back()) cuts.push_back(h);
    }
    cuts.push_back(ceiling);
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
      const double mass = cdf(cuts[j + 1]) - cdf(cuts[j]);
      if (mass > 0.0) success_value += mass * value_at(cuts[j]);
    }
  }
  return (1.0 - p_fail) * success_value;
}

void write_suite(std::ostream& out, const std::vector<SyntheticTask>& suite, std::uint64_t seed) {
  nlohmann::ordered_json header;
  header["format"] = kSuiteFormat;
  header["version"] = kSuiteVersion;
  header["seed"] = seed;
  header["tasks"] = suite.size();
  out << header.dump() << '\n';
  for (const auto& task : suite) {
    nlohmann::ordered_json line;
    line["id"] = task.instance->id;
    line["description"] = task.instance->description_features;
    line["difficulty"] = task.difficulty;
    line["fragility"] = task.fragility;
    line["ceiling"] = task.ceiling;
    line["metric_id"] = task.instance->metric_id;
    line["leaderboard_id"] = task.instance->leaderboard_id;
    line["leaderboard"] = std::vector<double>(task.leaderboard.scores().begin(),
                                              task.leaderboard.scores().end());
    out << line.dump() << '\n';
  }
}

std::vector<SyntheticTask> read_suite(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("suite file is empty");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != kSuiteFormat || header.value("version", 0) != kSuiteVersion) {
    throw std::runtime_error("unsupported suite format header");
  }
  const auto expected = header.at("tasks").get<std::size_t>();
  std::vector<SyntheticTask> suite;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    SyntheticTask task;
    TaskInstance instance;
    instance.id = j.at("id").get<std::string>();
    instance.description_features = j.at("description").get<std::vector<double>>();
    instance.difficulty = j.at("difficulty").get<double>();
    instance.metric_id = j.at("metric_id").get<std::string>();
    instance.leaderboard_id = j.at("leaderboard_id").get<std::string>();
    task.difficulty = instance.difficulty;
    task.fragility = j.at("fragility").get<double>();
    task.ceiling = j.at("ceiling").get<double>();
    task.leaderboard = Leaderboard(j.at("leaderboard").get<std::vector<double>>());
    task.instance = std::make_shared<const TaskInstance>(std::move(instance));
    suite.push_back(std::move(task));
  }
  if (suite.size() != expected) {
    throw std::runtime_error("suite header announces " + std::to_string(expected) +
                             " tasks, file holds " + std::to_string(suite.size()));
  }
  return suite;
}

}  // namespace acegrpo
