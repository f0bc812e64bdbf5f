#include "acegrpo/grpo_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "acegrpo/learnability.hpp"

namespace acegrpo {

ContextFeatures make_features(const ContextState& state) {
  if (!state.instance) throw std::invalid_argument("make_features: state has no instance");
  ContextFeatures f;
  auto& v = f.values;
  v[index_of(state.kind)] = 1.0;
  v[3] = state.instance->difficulty;
  v[4 + std::min<std::size_t>(state.depth(), 3)] = 1.0;
  v[8] = state.history.empty() ? -1.0 : state.history.back().score;
  v[9] = static_cast<double>(std::min<std::size_t>(state.depth(), 10)) / 10.0;
  return f;
}

ToyPolicy::ToyPolicy(std::size_t num_actions, std::size_t feature_dim)
    : ToyPolicy(num_actions, feature_dim, std::vector<double>(num_actions * feature_dim, 0.0)) {}

ToyPolicy::ToyPolicy(std::size_t num_actions, std::size_t feature_dim, std::vector<double> params)
    : num_actions_(num_actions), feature_dim_(feature_dim), params_(std::move(params)) {
  if (num_actions < 2) throw std::invalid_argument("policy needs at least two actions");
  if (feature_dim == 0) throw std::invalid_argument("policy needs a positive feature dimension");
  if (params_.size() != num_actions * feature_dim) {
    throw std::invalid_argument("policy parameter count does not match K x D");
  }
  for (double w : params_) {
    if (!std::isfinite(w)) throw std::invalid_argument("policy parameters must be finite");
  }
  reference_ = params_;
}

std::vector<double> ToyPolicy::project(std::span<const double> weights,
                                       std::span<const double> features) const {
  if (features.size() != feature_dim_) {
    throw std::invalid_argument("feature dimension " + std::to_string(features.size()) +
                                " does not match policy dimension " +
                                std::to_string(feature_dim_));
  }
  std::vector<double> out(num_actions_, 0.0);
  for (std::size_t k = 0; k < num_actions_; ++k) {
    const double* row = weights.data() + k * feature_dim_;
    out[k] = std::inner_product(features.begin(), features.end(), row, 0.0);
  }
  return out;
}

std::vector<double> ToyPolicy::logits(std::span<const double> features) const {
  return project(params_, features);
}

std::vector<double> ToyPolicy::reference_logits(std::span<const double> features) const {
  return project(reference_, features);
}

void ToyPolicy::publish(std::vector<double> params) {
  if (params.size() != params_.size()) throw std::invalid_argument("publish: size mismatch");
  params_ = std::move(params);
  ++version_;
}

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw std::invalid_argument("log_softmax of an empty vector");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const double top = *std::max_element(logits.begin(), logits.end()) / temperature;
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z / temperature - top);
  const double log_z = top + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / temperature - log_z;
  return out;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  auto out = log_softmax(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

std::vector<double> action_distribution(const ToyPolicy& policy, std::span<const double> features,
                                        double temperature) {
  return softmax(policy.logits(features), temperature);
}

std::size_t sample_action(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return probs.size() - 1;
}

AdvantageGroup advantages(std::span<const double> rewards, double eps_adv) {
  if (!(eps_adv > 0.0)) throw std::invalid_argument("advantage epsilon must be positive");
  const auto stats = group_mean_std(rewards);
  AdvantageGroup group;
  group.rewards.assign(rewards.begin(), rewards.end());
  group.mean = stats.mean;
  group.std = stats.std;
  group.eps_adv = eps_adv;
  group.advantages.reserve(rewards.size());
  for (double r : rewards) group.advantages.push_back((r - stats.mean) / (stats.std + eps_adv));
  return group;
}

void GrpoParams::validate() const {
  if (!(clip_delta > 0.0 && clip_delta < 1.0)) throw std::invalid_argument("clip delta in (0,1)");
  if (!(kl_coeff >= 0.0 && entropy_coeff >= 0.0)) {
    throw std::invalid_argument("loss coefficients must be >= 0");
  }
  if (group_size < 2) throw std::invalid_argument("group size must be >= 2");
  if (!(eps_adv > 0.0)) throw std::invalid_argument("advantage epsilon must be positive");
  if (!(rollout_temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

double clipped_surrogate(double ratio, double advantage, double clip_delta) {
  const double clipped = std::clamp(ratio, 1.0 - clip_delta, 1.0 + clip_delta);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_estimate(double new_logprob, double ref_logprob) {
  const double d = ref_logprob - new_logprob;
  return std::expm1(d) - d;
}

namespace {

struct SampleTerms {
  double surrogate;
  double kl;
  double grad;  // d(-surrogate + kl_coeff * kl) / d new_logprob
};

SampleTerms sample_terms(double new_lp, double old_lp, double ref_lp, double advantage,
                         const GrpoParams& p) {
  const double ratio = std::exp(new_lp - old_lp);
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - p.clip_delta, 1.0 + p.clip_delta) * advantage;
  const double d = ref_lp - new_lp;
  SampleTerms out;
  out.surrogate = std::min(unclipped, clipped);
  out.kl = std::expm1(d) - d;
  // Clipped branch is flat in the ratio; the unclipped branch has d(ratio)/d(lp) = ratio.
  const double surrogate_grad = unclipped <= clipped ? unclipped : 0.0;
  out.grad = -surrogate_grad + p.kl_coeff * (-std::expm1(d));
  return out;
}

double entropy_of(std::span<const double> log_probs) {
  double h = 0.0;
  for (double lp : log_probs) h -= std::exp(lp) * lp;
  return h;
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

}  // namespace

GrpoLoss grpo_loss(std::span<const double> new_logprobs, std::span<const double> old_logprobs,
                   std::span<const double> ref_logprobs, const AdvantageGroup& adv,
                   const GrpoParams& params, std::span<const double> entropies) {
  const std::size_t g = new_logprobs.size();
  if (g == 0 || old_logprobs.size() != g || ref_logprobs.size() != g ||
      adv.advantages.size() != g || (!entropies.empty() && entropies.size() != g)) {
    throw std::invalid_argument("grpo_loss: input lengths differ");
  }
  require_finite(new_logprobs, "new log-probs");
  require_finite(old_logprobs, "old log-probs");
  require_finite(ref_logprobs, "reference log-probs");

  GrpoLoss out;
  out.grad_new_logprobs.resize(g);
  const double inv_g = 1.0 / static_cast<double>(g);
  for (std::size_t i = 0; i < g; ++i) {
    const auto t = sample_terms(new_logprobs[i], old_logprobs[i], ref_logprobs[i],
                                adv.advantages[i], params);
    out.surrogate += t.surrogate * inv_g;
    out.kl += t.kl * inv_g;
    out.grad_new_logprobs[i] = t.grad * inv_g;
    if (!entropies.empty()) out.entropy += entropies[i] * inv_g;
  }
  out.loss = -out.surrogate + params.kl_coeff * out.kl - params.entropy_coeff * out.entropy;
  return out;
}

PolicyObjective policy_objective(const ToyPolicy& policy, std::span<const double> params,
                                 std::span<const TrainingSample> batch, const GrpoParams& p) {
  if (batch.empty()) throw std::invalid_argument("policy_objective: empty batch");
  if (params.size() != policy.params().size()) {
    throw std::invalid_argument("policy_objective: parameter size mismatch");
  }
  const std::size_t k_actions = policy.num_actions();
  const std::size_t dim = policy.feature_dim();
  const ToyPolicy evaluated(k_actions, dim, std::vector<double>(params.begin(), params.end()));

  PolicyObjective out;
  out.gradient.assign(params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> logit_grad(k_actions);
  for (const auto& sample : batch) {
    if (sample.action >= k_actions) throw std::invalid_argument("sample action out of range");
    const auto lp = log_softmax(evaluated.logits(sample.features));
    const auto t = sample_terms(lp[sample.action], sample.old_logprob, sample.ref_logprob,
                                sample.advantage, p);
    const double h = entropy_of(lp);
    out.surrogate += t.surrogate * inv_n;
    out.kl += t.kl * inv_n;
    out.entropy += h * inv_n;

    // d lp[a] / d z_j = [j == a] - pi_j ;  d H / d z_j = -pi_j (lp_j + H)
    for (std::size_t j = 0; j < k_actions; ++j) {
      const double pi = std::exp(lp[j]);
      const double indicator = j == sample.action ? 1.0 : 0.0;
      logit_grad[j] = (t.grad * (indicator - pi) + p.entropy_coeff * pi * (lp[j] + h)) * inv_n;
    }
    for (std::size_t j = 0; j < k_actions; ++j) {
      double* row = out.gradient.data() + j * dim;
      for (std::size_t d = 0; d < dim; ++d) row[d] += logit_grad[j] * sample.features[d];
    }
  }
  out.loss = -out.surrogate + p.kl_coeff * out.kl - p.entropy_coeff * out.entropy;
  return out;
}

void OptimizerParams::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0,1)");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("gradient clip norm must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

OptimizerState::OptimizerState(OptimizerParams p, std::size_t num_params)
    : params(p), first_moment(num_params, 0.0), second_moment(num_params, 0.0) {}

UpdateReport update(ToyPolicy& policy, OptimizerState& opt, std::span<const TrainingSample> batch,
                    const GrpoParams& params) {
  if (batch.empty()) throw std::invalid_argument("update: empty batch");
  for (const auto& sample : batch) {
    if (!std::isfinite(sample.advantage)) throw std::invalid_argument("update: non-finite advantage");
    if (sample.behavior_version < policy.version() - 1 ||
        sample.behavior_version > policy.version()) {
      throw std::logic_error("update: sample from policy version " +
                             std::to_string(sample.behavior_version) + " used at version " +
                             std::to_string(policy.version()));
    }
  }
  const std::size_t n = policy.params().size();
  if (opt.first_moment.size() != n || opt.second_moment.size() != n) {
    throw std::invalid_argument("update: optimizer state does not match the policy");
  }

  const auto objective = policy_objective(policy, policy.params(), batch, params);
  UpdateReport report;
  report.loss = objective.loss;
  report.surrogate = objective.surrogate;
  report.kl = objective.kl;
  report.entropy = objective.entropy;
  double sq = 0.0;
  for (double g : objective.gradient) sq += g * g;
  report.grad_norm = std::sqrt(sq);
  report.version = policy.version();
  if (!std::isfinite(report.grad_norm) || !std::isfinite(report.loss)) return report;

  const auto& hp = opt.params;
  const double scale = report.grad_norm > hp.grad_clip_norm ? hp.grad_clip_norm / report.grad_norm
                                                            : 1.0;
  opt.step_count += 1;
  const double bias1 = 1.0 - std::pow(hp.beta1, static_cast<double>(opt.step_count));
  const double bias2 = 1.0 - std::pow(hp.beta2, static_cast<double>(opt.step_count));
  std::vector<double> next(policy.params().begin(), policy.params().end());
  for (std::size_t i = 0; i < n; ++i) {
    const double g = objective.gradient[i] * scale;
    opt.first_moment[i] = hp.beta1 * opt.first_moment[i] + (1.0 - hp.beta1) * g;
    opt.second_moment[i] = hp.beta2 * opt.second_moment[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = opt.first_moment[i] / bias1;
    const double v_hat = opt.second_moment[i] / bias2;
    next[i] -= hp.learning_rate * (m_hat / (std::sqrt(v_hat) + hp.epsilon) + hp.weight_decay * next[i]);
  }
  policy.publish(std::move(next));
  report.applied = true;
  report.version = policy.version();
  return report;
}

}  // namespace acegrpo
