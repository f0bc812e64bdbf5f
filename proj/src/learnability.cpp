#include "acegrpo/learnability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace acegrpo {

void PotentialParams::validate() const {
  if (!(uncertainty_weight >= 0.0)) throw std::invalid_argument("uncertainty weight must be >= 0");
  if (!(headroom_weight >= 0.0)) throw std::invalid_argument("headroom weight must be >= 0");
  if (!(std_clip > 0.0)) throw std::invalid_argument("std clip must be > 0");
  if (!(p_init >= 0.0)) throw std::invalid_argument("initial potential must be >= 0");
}

void validate_reward_group(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("reward group needs at least 2 rewards, got " +
                                std::to_string(rewards.size()));
  }
  for (double r : rewards) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw std::invalid_argument("group reward " + std::to_string(r) + " outside [0,1]");
    }
  }
}

GroupStats group_mean_std(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("group statistics need at least 2 rewards");
  }
  // Constant groups are exact: no rounding residue in the mean or the spread.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return {rewards[0], 0.0};
  }
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double mean = sum / n;
  double sq = 0.0;
  for (double r : rewards) sq += (r - mean) * (r - mean);
  return {mean, std::sqrt(sq / n)};
}

double potential(std::span<const double> rewards, const PotentialParams& params) {
  validate_reward_group(rewards);
  const auto stats = group_mean_std(rewards);
  const double uncertainty = std::clamp(stats.std, 0.0, params.std_clip);
  const double headroom = std::clamp(1.0 - stats.mean, 0.0, 1.0);
  return params.uncertainty_weight * uncertainty + params.headroom_weight * headroom;
}

double update_potential(EvolvingBuffer& buffer, StateId id, std::span<const double> rewards,
                        const PotentialParams& params) {
  const double value = potential(rewards, params);
  buffer.set_potential(id, value, group_mean_std(rewards).std);
  return value;
}

}  // namespace acegrpo
