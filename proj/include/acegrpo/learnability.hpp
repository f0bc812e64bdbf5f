#pragma once

#include <span>

#include "acegrpo/context_buffer.hpp"

namespace acegrpo {

struct PotentialParams {
  double uncertainty_weight = 0.5;
  double headroom_weight = 0.5;
  /// Upper clip on the group standard deviation.
  double std_clip = 1.0;
  double p_init = 0.05;

  void validate() const;
  /// Largest value potential() can return.
  double upper_bound() const noexcept { return uncertainty_weight * std_clip + headroom_weight; }
};

struct GroupStats {
  double mean = 0.0;
  /// Population standard deviation (divisor G).
  double std = 0.0;
};

/// Throws std::invalid_argument for fewer than two rewards or rewards outside [0,1].
void validate_reward_group(std::span<const double> rewards);

GroupStats group_mean_std(std::span<const double> rewards);

/// uncertainty_weight * clip(std, 0, std_clip) + headroom_weight * clip(1 - mean, 0, 1).
double potential(std::span<const double> rewards, const PotentialParams& params);

/// Overwrites the state's potential from its latest group; returns the new value.
double update_potential(EvolvingBuffer& buffer, StateId id, std::span<const double> rewards,
                        const PotentialParams& params);

}  // namespace acegrpo
