#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "acegrpo/context_buffer.hpp"

namespace acegrpo {

inline constexpr double kInvalidScore = -1.0;

struct RewardParams {
  /// Weight of the relative-improvement term.
  double alpha_improve = 0.3;
  double epsilon_stab = 1e-6;

  void validate() const;
};

/// Frozen human leaderboard; scores are kept sorted ascending, higher is better.
class Leaderboard {
 public:
  explicit Leaderboard(std::vector<double> participant_scores);

  std::size_t size() const noexcept { return scores_.size(); }
  std::span<const double> scores() const noexcept { return scores_; }
  std::size_t count_strictly_greater(double performance) const;

 private:
  std::vector<double> scores_;
};

/// 1 - p/N with p = 1 + (participants strictly better); nullopt performance marks an
/// invalid submission and yields -1.
double humanrank(std::optional<double> performance, const Leaderboard& board);

/// Baseline score s_p: 0 for Draft, otherwise the most recent non-negative history score
/// (0 when every prior execution failed).
double prior_score(const ContextState& state);

/// Mixed absolute/relative reward. s = -1 maps to 0; throws when s_p >= 1.
double shaped_reward(double score, double prior, const RewardParams& params);

}  // namespace acegrpo
