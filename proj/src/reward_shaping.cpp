#include "acegrpo/reward_shaping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace acegrpo {

void RewardParams::validate() const {
  if (!(alpha_improve >= 0.0 && alpha_improve <= 1.0)) {
    throw std::invalid_argument("reward alpha must lie in [0,1]");
  }
  if (!(epsilon_stab > 0.0)) throw std::invalid_argument("reward epsilon must be positive");
}

Leaderboard::Leaderboard(std::vector<double> participant_scores)
    : scores_(std::move(participant_scores)) {
  if (scores_.empty()) throw std::invalid_argument("leaderboard must not be empty");
  for (double s : scores_) {
    if (!std::isfinite(s)) throw std::invalid_argument("leaderboard scores must be finite");
  }
  std::sort(scores_.begin(), scores_.end());
}

std::size_t Leaderboard::count_strictly_greater(double performance) const {
  auto it = std::upper_bound(scores_.begin(), scores_.end(), performance);
  return static_cast<std::size_t>(scores_.end() - it);
}

double humanrank(std::optional<double> performance, const Leaderboard& board) {
  if (!performance) return kInvalidScore;
  const double n = static_cast<double>(board.size());
  // A submission below every participant shares the last place.
  const double rank =
      std::min(n, 1.0 + static_cast<double>(board.count_strictly_greater(*performance)));
  return 1.0 - rank / n;
}

double prior_score(const ContextState& state) {
  if (state.kind == TaskKind::Draft) return 0.0;
  for (auto it = state.history.rbegin(); it != state.history.rend(); ++it) {
    if (it->score >= 0.0) return it->score;
  }
  return 0.0;
}

double shaped_reward(double score, double prior, const RewardParams& params) {
  if (!(prior >= 0.0 && prior < 1.0)) {
    throw std::invalid_argument("shaped_reward: baseline score must lie in [0,1)");
  }
  if (score == kInvalidScore) return 0.0;
  if (!(score >= 0.0 && score <= 1.0)) {
    throw std::invalid_argument("shaped_reward: score must be -1 or lie in [0,1]");
  }
  const double alpha = params.alpha_improve;
  const double relative = (score - prior) / (1.0 - prior + params.epsilon_stab);
  return (1.0 - alpha) * score + alpha * std::max(0.0, relative);
}

}  // namespace acegrpo
