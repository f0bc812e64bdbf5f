#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "acegrpo/context_buffer.hpp"
#include "acegrpo/reward_shaping.hpp"

namespace acegrpo {

inline constexpr std::size_t kLeaderboardSize = 100;
inline constexpr std::size_t kDescriptionDim = 4;
inline constexpr double kMaxFailureProbability = 0.95;

struct SyntheticTask {
  std::shared_ptr<const TaskInstance> instance;
  /// Best attainable raw performance.
  double ceiling = 1.0;
  double difficulty = 0.0;
  /// Base failure probability.
  double fragility = 0.0;
  Leaderboard leaderboard{std::vector<double>{0.5}};
};

struct EnvParams {
  /// Action index -> solution quality, ascending.
  std::vector<double> quality_levels{0.1, 0.4, 0.7, 0.95};
  double noise_sigma = 0.05;
  double debug_rescue_bonus = 0.5;
  double improve_gain = 0.3;
  std::uint64_t rng_seed = 7;
  /// Successful runs cost a log-uniform tick count in [min_ticks, max_ticks];
  /// failures use half that range.
  double min_ticks = 4.0;
  double max_ticks = 16.0;

  void validate() const;
  std::size_t num_actions() const noexcept { return quality_levels.size(); }
};

struct ExecOutcome {
  ExecFeedback feedback;
  /// HumanRank score, -1 on failure.
  double raw_score = kInvalidScore;
  /// Raw continuous performance before ranking; absent on failure.
  std::optional<double> performance;
  int latency_ticks = 1;
};

/// Deterministic suite: stratified difficulties and an independent frozen leaderboard each.
std::vector<SyntheticTask> make_task_suite(std::size_t n, std::uint64_t seed);

double failure_probability(const SyntheticTask& task, TaskKind kind, double quality,
                           const EnvParams& env);

/// Performance before noise and clamping.
double performance_mean(const SyntheticTask& task, const ContextState& state, double quality,
                        const EnvParams& env);

/// Simulated execution of `action` from state `x`. Always consumes the same number of draws.
ExecOutcome execute(const SyntheticTask& task, const ContextState& x, std::size_t action,
                    const EnvParams& env, std::mt19937_64& rng);

int tick_cost(const ExecOutcome& outcome);

/// Exact expectation of the shaped reward of one execution, integrating the Gaussian
/// performance noise against the leaderboard step function.
double expected_shaped_reward(const SyntheticTask& task, const ContextState& x,
                              std::size_t action, const EnvParams& env,
                              const RewardParams& reward);

/// Versioned line-delimited suite file: a header line, then one task per line.
void write_suite(std::ostream& out, const std::vector<SyntheticTask>& suite, std::uint64_t seed);
std::vector<SyntheticTask> read_suite(std::istream& in);

}  // namespace acegrpo
