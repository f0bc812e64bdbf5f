#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "acegrpo/context_buffer.hpp"

namespace acegrpo {

/// kind one-hot (3), difficulty, depth bucket one-hot (4), last score, history length.
inline constexpr std::size_t kContextFeatureDim = 10;

struct ContextFeatures {
  std::array<double, kContextFeatureDim> values{};

  std::span<const double> view() const noexcept { return values; }
};

ContextFeatures make_features(const ContextState& state);

/// Linear softmax policy: logits = params * features, params is K x D row-major.
class ToyPolicy {
 public:
  ToyPolicy(std::size_t num_actions, std::size_t feature_dim);
  /// Starts from the given parameters; they also become the frozen reference.
  ToyPolicy(std::size_t num_actions, std::size_t feature_dim, std::vector<double> params);

  std::size_t num_actions() const noexcept { return num_actions_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::int64_t version() const noexcept { return version_; }

  std::span<const double> params() const noexcept { return params_; }
  std::span<const double> reference_params() const noexcept { return reference_; }

  std::vector<double> logits(std::span<const double> features) const;
  std::vector<double> reference_logits(std::span<const double> features) const;

  /// Replaces the parameters and bumps the version; used by the optimizer.
  void publish(std::vector<double> params);

 private:
  std::vector<double> project(std::span<const double> weights,
                              std::span<const double> features) const;

  std::size_t num_actions_;
  std::size_t feature_dim_;
  std::vector<double> params_;
  std::vector<double> reference_;
  std::int64_t version_ = 0;
};

std::vector<double> log_softmax(std::span<const double> logits, double temperature = 1.0);
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// pi(. | x) at the given temperature.
std::vector<double> action_distribution(const ToyPolicy& policy, std::span<const double> features,
                                        double temperature = 1.0);

/// Draws an action index from a probability vector.
std::size_t sample_action(std::span<const double> probs, std::mt19937_64& rng);

struct AdvantageGroup {
  std::vector<double> rewards;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> advantages;
  double eps_adv = 1e-6;
};

/// (r_i - mean) / (std + eps_adv) with the population std.
AdvantageGroup advantages(std::span<const double> rewards, double eps_adv);

struct GrpoParams {
  double clip_delta = 0.2;
  double kl_coeff = 0.005;
  double entropy_coeff = 0.0005;
  std::size_t group_size = 8;
  double eps_adv = 1e-6;
  /// Applied when sampling rollouts only; ratios use temperature 1.
  double rollout_temperature = 0.7;

  void validate() const;
};

/// Clipped surrogate term min(ratio * adv, clip(ratio, 1-delta, 1+delta) * adv).
double clipped_surrogate(double ratio, double advantage, double clip_delta);

/// exp(d) - d - 1 with d = ref - new; non-negative for all d.
double kl_estimate(double new_logprob, double ref_logprob);

struct GrpoLoss {
  /// -surrogate + kl_coeff * kl - entropy_coeff * entropy
  double loss = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  /// d loss / d new_logprobs. Entropy enters through the logits, not these inputs.
  std::vector<double> grad_new_logprobs;
};

/// Group loss averaged over G samples. entropies, when given, holds the exact policy
/// entropy at each sample's context.
GrpoLoss grpo_loss(std::span<const double> new_logprobs, std::span<const double> old_logprobs,
                   std::span<const double> ref_logprobs, const AdvantageGroup& adv,
                   const GrpoParams& params, std::span<const double> entropies = {});

struct TrainingSample {
  std::vector<double> features;
  std::size_t action = 0;
  double old_logprob = 0.0;
  double ref_logprob = 0.0;
  double advantage = 0.0;
  /// Policy version that produced old_logprob.
  std::int64_t behavior_version = 0;
};

struct PolicyObjective {
  double loss = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  /// d loss / d params, same layout as ToyPolicy::params().
  std::vector<double> gradient;
};

/// Batch-mean GRPO loss and its exact gradient with respect to the policy parameters.
PolicyObjective policy_objective(const ToyPolicy& policy, std::span<const double> params,
                                 std::span<const TrainingSample> batch, const GrpoParams& p);

struct OptimizerParams {
  double learning_rate = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.1;
  double grad_clip_norm = 1.0;
  double epsilon = 1e-8;

  void validate() const;
};

struct OptimizerState {
  OptimizerParams params;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step_count = 0;

  OptimizerState() = default;
  OptimizerState(OptimizerParams p, std::size_t num_params);
};

struct UpdateReport {
  bool applied = false;
  double loss = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  /// Global gradient norm before clipping.
  double grad_norm = 0.0;
  std::int64_t version = 0;
};

/// One clipped AdamW step on the batch-mean loss. Non-finite gradients leave the policy
/// and optimizer untouched and report applied = false. Samples more than one version
/// stale raise std::logic_error.
UpdateReport update(ToyPolicy& policy, OptimizerState& opt, std::span<const TrainingSample> batch,
                    const GrpoParams& params);

}  // namespace acegrpo
