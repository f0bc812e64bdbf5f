#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "acegrpo/context_buffer.hpp"

namespace acegrpo {

struct StageParams {
  double focusing_rho = 2.0;
  /// Floor on the base weight, relative to the top weight of 1.
  double min_weight_ratio = 0.01;
  double exploration_eps = 0.2;
  /// Fraction of each kind's eligible states that receives base weight.
  double top_percentile = 1.0;
  int hard_block = 1;

  void validate() const;
};

enum class Stage : std::uint8_t { Early = 0, Mid = 1, Late = 2 };
std::string_view to_string(Stage stage) noexcept;

/// Early/Mid/Late parameters switched by buffer size.
struct StageSchedule {
  StageParams early{2.0, 0.01, 0.2, 1.0, 1};
  StageParams mid{3.5, 0.005, 0.15, 1.0, 2};
  StageParams late{5.0, 0.001, 0.1, 0.4, 3};
  std::size_t mid_threshold = 200;
  std::size_t late_threshold = 1000;

  void validate() const;
  Stage stage_of(std::size_t buffer_size) const noexcept;
  const StageParams& params(Stage stage) const noexcept;
};

const StageParams& stage_for(std::size_t buffer_size, const StageSchedule& schedule);

struct CoolingParams {
  double gamma = 0.3;
  double eta = 0.9;

  void validate() const;
};

struct TypeWeights {
  double draft = 2.0;
  double debug = 1.0;
  double improve = 1.0;

  void validate() const;
  double multiplier(TaskKind kind) const noexcept;
};

enum class SamplerMode : std::uint8_t { Adaptive, Uniform };
std::string_view to_string(SamplerMode mode) noexcept;
SamplerMode parse_sampler_mode(std::string_view text);

struct SamplerConfig {
  StageSchedule schedule;
  CoolingParams cooling;
  TypeWeights type_weights;
  SamplerMode mode = SamplerMode::Adaptive;

  void validate() const;
};

/// Distribution over the eligible (non hard-blocked) states of a snapshot.
struct SamplingDistribution {
  std::vector<StateId> ids;
  std::vector<double> probs;
  /// Position of each entry in the source snapshot.
  std::vector<std::size_t> snapshot_index;
  Stage stage = Stage::Early;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Normalized within-kind rank for each input state: 0 for the highest potential,
/// i/(n_kind - 1) at sorted position i. Ties go to smaller depth, then earlier position.
std::vector<double> ranks_within_kind(std::span<const StateSummary> states);

/// (1 - rank)^rho, floored at min_weight_ratio.
double base_weight(double rank, const StageParams& stage);

/// Hard-block indicator times the decayed penalty over recorded visits.
double cooling(std::span<const std::int64_t> visit_times, std::int64_t t, const StageParams& stage,
               const CoolingParams& params);

/// Builds Q_t. Returns nullopt when every state is hard-blocked at t.
std::optional<SamplingDistribution> build_distribution(const BufferSnapshot& snapshot,
                                                       std::int64_t t,
                                                       const SamplerConfig& config);

/// k distinct ids drawn proportionally to probs with sequential renormalization.
/// Throws when fewer than k entries carry positive probability.
std::vector<StateId> sample_batch(const SamplingDistribution& dist, std::size_t k,
                                  std::mt19937_64& rng);
std::vector<StateId> sample_batch(const SamplingDistribution& dist, std::size_t k,
                                  std::uint64_t rng_seed);

struct SamplerDiagnostics {
  Stage stage = Stage::Early;
  std::size_t support = 0;
  double entropy = 0.0;
  /// Probability mass on states whose latest group had non-zero reward spread.
  double frontier_mass = 0.0;
};

SamplerDiagnostics diagnose(const SamplingDistribution& dist, const BufferSnapshot& snapshot);

}  // namespace acegrpo
