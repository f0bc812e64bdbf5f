#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acegrpo/adaptive_sampler.hpp"
#include "acegrpo/context_buffer.hpp"
#include "acegrpo/grpo_core.hpp"
#include "acegrpo/learnability.hpp"
#include "acegrpo/reward_shaping.hpp"
#include "acegrpo/sim_env.hpp"

namespace acegrpo {

struct RunConfig {
  std::int64_t total_steps = 400;
  std::size_t rollout_tasks_per_step = 8;
  std::size_t group_size = 8;
  std::size_t global_batch = 64;
  std::optional<std::int64_t> execution_budget_ticks;
  std::size_t num_tasks = 134;
  std::uint64_t suite_seed = 2024;
  std::uint64_t seed = 1;
  std::size_t workers = 4;
  /// Learner trains on step t while workers roll out step t+1 with a one-version-old policy.
  bool pipelined_learner = false;
  /// false lets workers commit to the buffer as they finish; state ids then depend on timing.
  bool deterministic = true;
  /// false discards spawned children (the "no evolving buffer" ablation arm).
  bool keep_children = true;

  RewardParams reward;
  PotentialParams potential;
  SamplerConfig sampler;
  GrpoParams grpo;
  OptimizerParams optimizer{.learning_rate = 0.003};
  EnvParams env;

  /// Throws std::invalid_argument naming the first inconsistent field.
  void validate() const;
};

/// Applies one `key = value` setting; throws on unknown keys or malformed values.
void apply_config_value(RunConfig& config, const std::string& key, const std::string& value);
/// Reads a key-value file: one `key = value` per line, `#` starts a comment.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
std::string to_config_text(const RunConfig& config);

struct StepMetrics {
  std::int64_t step = 0;
  std::size_t executions = 0;
  std::array<std::optional<double>, kNumKinds> valid_rate{};
  std::array<std::optional<double>, kNumKinds> mean_reward_by_kind{};
  std::optional<double> mean_reward;
  /// Policy's expected shaped reward on the fixed probe set after this step's update.
  double eval_reward = 0.0;
  std::size_t buffer_size = 0;
  Stage stage = Stage::Early;
  std::size_t support = 0;
  double entropy = 0.0;
  double frontier_mass = 0.0;
  bool no_eligible_state = false;
  std::int64_t policy_version = 0;
  bool update_applied = false;
  double loss = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double policy_entropy = 0.0;
  double grad_norm = 0.0;
  std::int64_t ticks_step = 0;
  std::int64_t ticks_total = 0;
};

inline constexpr int kMetricsSchemaVersion = 1;

/// Streams metrics.jsonl (header line + one record per step) and metrics.csv.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& out_dir);
  void write(const StepMetrics& m);
  /// Flushes both files; throws if either stream failed.
  void close();

 private:
  std::filesystem::path jsonl_path_;
  std::filesystem::path csv_path_;
  std::ofstream jsonl_;
  std::ofstream csv_;
};

std::string to_json_line(const StepMetrics& m);
std::string csv_header();
std::string to_csv_row(const StepMetrics& m);

/// Writes a full metrics stream to out_dir.
void emit_metrics(const std::filesystem::path& out_dir, std::span<const StepMetrics> metrics);

/// Fixed evaluation contexts (a Draft, a Debug and an Improve probe per task) with the
/// exact expected shaped reward of every action precomputed.
class ProbeSet {
 public:
  ProbeSet(const std::vector<SyntheticTask>& suite, const EnvParams& env,
           const RewardParams& reward);

  std::size_t size() const noexcept { return features_.size(); }
  double expected_reward(const ToyPolicy& policy, double temperature) const;
  double expected_reward(const ToyPolicy& policy, double temperature, TaskKind kind) const;

 private:
  std::vector<ContextFeatures> features_;
  std::vector<TaskKind> kinds_;
  std::vector<std::vector<double>> action_values_;
};

struct RunResult {
  std::vector<StepMetrics> metrics;
  std::vector<ContextState> final_states;
  std::vector<double> final_params;
  std::int64_t final_version = 0;
  std::size_t seed_states = 0;
  std::size_t executions = 0;
  std::size_t children_appended = 0;
  std::int64_t ticks_total = 0;
  int max_tick_cost = 0;
  bool budget_exhausted = false;
};

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void on_step(const StepMetrics& m) = 0;
};

RunResult run_training(const RunConfig& config, MetricsSink* sink = nullptr);

/// Mean eval reward over the last `window` records (all records if fewer).
double final_smoothed_reward(std::span<const StepMetrics> metrics, std::size_t window = 50);

/// Trailing moving average of eval_reward; entry i averages records max(0,i-window+1)..i.
std::vector<double> smoothed_eval_curve(std::span<const StepMetrics> metrics, std::size_t window);

enum class Arm : std::uint8_t { Full = 0, NoBuffer = 1, Uniform = 2 };
inline constexpr std::array<Arm, 3> kAllArms = {Arm::Full, Arm::NoBuffer, Arm::Uniform};
std::string_view to_string(Arm arm) noexcept;
RunConfig arm_config(const RunConfig& base, Arm arm, std::uint64_t seed);

struct PairedComparison {
  Arm baseline = Arm::Uniform;
  double mean_difference = 0.0;
  double sd_difference = 0.0;
  double t_statistic = 0.0;
  /// One-sided p-value for H1: full > baseline.
  double p_value = 1.0;
  std::size_t wins = 0;
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  /// final_reward[arm][seed index]
  std::array<std::vector<double>, 3> final_reward;
  std::array<double, 3> mean{};
  std::array<double, 3> sd{};
  std::array<std::vector<std::size_t>, 3> final_buffer_size;
  std::vector<PairedComparison> comparisons;
};

/// Paired one-sided t-test of a > b.
PairedComparison paired_one_sided(std::span<const double> a, std::span<const double> b);

/// Runs the full, no-buffer and uniform arms for every seed under the same config.
AblationReport run_ablation(const RunConfig& config, std::span<const std::uint64_t> seeds,
                            std::size_t parallel_runs = 1);
std::string to_json(const AblationReport& report);

}  // namespace acegrpo
