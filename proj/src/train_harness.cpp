#include "acegrpo/train_harness.hpp"

#include <algorithm>
#include <future>
#include <initializer_list>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace acegrpo {

namespace {

constexpr std::uint64_t kSamplerStream = 0x53414d50;

/// Independent generator for a tuple of stream coordinates.
std::mt19937_64 stream_rng(std::initializer_list<std::uint64_t> coords) {
  std::vector<std::uint32_t> words;
  words.reserve(coords.size() * 2);
  for (std::uint64_t c : coords) {
    words.push_back(static_cast<std::uint32_t>(c));
    words.push_back(static_cast<std::uint32_t>(c >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// Launch gate on the cumulative tick budget. Executions stop being admitted once the
/// spent total reaches the budget, so the overshoot is below one execution's cost.
class BudgetGate {
 public:
  explicit BudgetGate(std::optional<std::int64_t> budget) : budget_(budget) {}

  bool admit(int ticks) {
    std::lock_guard lock(mutex_);
    if (budget_ && spent_ >= *budget_) {
      exhausted_ = true;
      return false;
    }
    spent_ += ticks;
    max_cost_ = std::max(max_cost_, ticks);
    return true;
  }

  std::int64_t spent() const {
    std::lock_guard lock(mutex_);
    return spent_;
  }
  bool exhausted() const {
    std::lock_guard lock(mutex_);
    return exhausted_;
  }
  int max_cost() const {
    std::lock_guard lock(mutex_);
    return max_cost_;
  }

 private:
  mutable std::mutex mutex_;
  std::optional<std::int64_t> budget_;
  std::int64_t spent_ = 0;
  int max_cost_ = 0;
  bool exhausted_ = false;
};

struct SlotResult {
  ContextState state;
  ContextFeatures features;
  std::vector<double> logprobs;
  std::vector<double> ref_logprobs;
  std::int64_t behavior_version = 0;
  std::vector<std::size_t> actions;
  std::vector<ExecOutcome> outcomes;
  std::vector<double> rewards;
  std::vector<ContextState> children;
  std::vector<bool> admitted;
};

struct PendingStep {
  StepMetrics metrics;
  std::vector<TrainingSample> batch;
};

void run_parallel(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<TaskInstance> seed_instances(const std::vector<SyntheticTask>& suite) {
  std::vector<TaskInstance> out;
  out.reserve(suite.size());
  for (const auto& task : suite) out.push_back(*task.instance);
  return out;
}

class Trainer {
 public:
  explicit Trainer(const RunConfig& config)
      : cfg_(config),
        suite_(make_task_suite(config.num_tasks, config.suite_seed)),
        probes_(suite_, config.env, config.reward),
        buffer_(seed_instances(suite_), config.potential.p_init),
        policy_(config.env.num_actions(), kContextFeatureDim),
        opt_(config.optimizer, config.env.num_actions() * kContextFeatureDim),
        gate_(config.execution_budget_ticks) {
    // The buffer copies the seed instances; map its pointers back to their tasks.
    buffer_.for_each([&](const ContextState& s) {
      task_of_.emplace(s.instance.get(), task_of_.size());
    });
  }

  RunResult run(MetricsSink* sink) {
    RunResult result;
    result.seed_states = buffer_.size();
    const auto emit = [&](PendingStep& p) {
      result.metrics.push_back(p.metrics);
      if (sink) sink->on_step(p.metrics);
    };

    if (!cfg_.pipelined_learner) {
      for (std::int64_t t = 1; t <= cfg_.total_steps; ++t) {
        PendingStep p = rollout_and_commit(t, policy_);
        finish_update(p);
        emit(p);
        if (gate_.exhausted()) break;
      }
    } else {
      std::optional<PendingStep> inflight;
      for (std::int64_t t = 1; t <= cfg_.total_steps; ++t) {
        const ToyPolicy behavior = policy_;
        std::future<void> learner;
        if (inflight) learner = std::async(std::launch::async, [&] { finish_update(*inflight); });
        PendingStep next;
        try {
          next = rollout_and_commit(t, behavior);
        } catch (...) {
          if (learner.valid()) learner.wait();
          throw;
        }
        if (learner.valid()) {
          learner.get();
          emit(*inflight);
        }
        inflight = std::move(next);
        if (gate_.exhausted()) break;
      }
      if (inflight) {
        finish_update(*inflight);
        emit(*inflight);
      }
    }

    result.final_states = buffer_.states();
    const auto params = policy_.params();
    result.final_params.assign(params.begin(), params.end());
    result.final_version = policy_.version();
    result.executions = executions_;
    result.children_appended = children_appended_;
    result.ticks_total = gate_.spent();
    result.max_tick_cost = gate_.max_cost();
    result.budget_exhausted = gate_.exhausted();
    return result;
  }

 private:
  const SyntheticTask& task_for(const ContextState& s) const {
    return suite_[task_of_.at(s.instance.get())];
  }

  /// Rolls out one group of G executions from `state`. In non-deterministic mode each
  /// execution is admitted and its child committed as soon as it finishes.
  SlotResult rollout_slot(std::int64_t t, std::size_t slot, ContextState state,
                          const ToyPolicy& behavior) {
    const std::size_t g = cfg_.group_size;
    SlotResult r;
    r.features = make_features(state);
    const auto logits = behavior.logits(r.features.view());
    const auto probs = softmax(logits, cfg_.grpo.rollout_temperature);
    r.logprobs = log_softmax(logits, 1.0);
    r.ref_logprobs = log_softmax(behavior.reference_logits(r.features.view()), 1.0);
    r.behavior_version = behavior.version();

    const SyntheticTask& task = task_for(state);
    const double baseline = prior_score(state);
    auto rng = stream_rng({cfg_.seed, cfg_.env.rng_seed, static_cast<std::uint64_t>(t), slot});
    for (std::size_t i = 0; i < g; ++i) {
      const std::size_t action = sample_action(probs, rng);
      ExecOutcome out = execute(task, state, action, cfg_.env, rng);
      const SolutionId solution =
          static_cast<SolutionId>(t) * cfg_.global_batch + slot * g + i;
      ContextState child = transition(state, solution, out.feedback, out.raw_score,
                                      cfg_.potential.p_init);
      if (!cfg_.deterministic) {
        if (gate_.exhausted()) break;
        const bool ok = gate_.admit(tick_cost(out));
        r.admitted.push_back(ok);
        if (!ok) break;
        if (cfg_.keep_children) buffer_.append(child);
      }
      r.actions.push_back(action);
      r.rewards.push_back(shaped_reward(out.raw_score, baseline, cfg_.reward));
      r.outcomes.push_back(std::move(out));
      r.children.push_back(std::move(child));
    }
    r.state = std::move(state);
    return r;
  }

  PendingStep rollout_and_commit(std::int64_t t, const ToyPolicy& behavior) {
    PendingStep p;
    StepMetrics& m = p.metrics;
    m.step = t;
    buffer_.advance_iteration(t);
    const BufferSnapshot snap = buffer_.snapshot();
    m.stage = cfg_.sampler.schedule.stage_of(snap.size());
    const auto dist = build_distribution(snap, t, cfg_.sampler);
    if (!dist) {
      m.no_eligible_state = true;
      m.buffer_size = buffer_.size();
      m.ticks_total = gate_.spent();
      return p;
    }
    const auto diag = diagnose(*dist, snap);
    m.stage = diag.stage;
    m.support = diag.support;
    m.entropy = diag.entropy;
    m.frontier_mass = diag.frontier_mass;

    const auto positive = static_cast<std::size_t>(
        std::count_if(dist->probs.begin(), dist->probs.end(), [](double q) { return q > 0.0; }));
    const std::size_t k = std::min(cfg_.rollout_tasks_per_step, positive);
    auto sampler_rng = stream_rng({cfg_.seed, kSamplerStream, static_cast<std::uint64_t>(t)});
    const auto chosen = sample_batch(*dist, k, sampler_rng);

    std::vector<ContextState> states;
    states.reserve(chosen.size());
    for (StateId id : chosen) states.push_back(buffer_.get(id));

    const std::int64_t ticks_before = gate_.spent();
    std::vector<SlotResult> slots(states.size());
    run_parallel(states.size(), cfg_.workers, [&](std::size_t s) {
      slots[s] = rollout_slot(t, s, std::move(states[s]), behavior);
    });

    if (cfg_.deterministic) {
      for (auto& slot : slots) {
        for (std::size_t i = 0; i < slot.outcomes.size(); ++i) {
          const bool ok = !gate_.exhausted() && gate_.admit(tick_cost(slot.outcomes[i]));
          slot.admitted.push_back(ok);
          if (!ok) break;
          if (cfg_.keep_children) buffer_.append(slot.children[i]);
        }
      }
    }

    std::array<std::size_t, kNumKinds> runs{};
    std::array<std::size_t, kNumKinds> valid{};
    std::array<double, kNumKinds> reward_sum{};
    for (auto& slot : slots) {
      const auto admitted = static_cast<std::size_t>(
          std::count(slot.admitted.begin(), slot.admitted.end(), true));
      if (admitted == 0) continue;
      buffer_.record_visit(slot.state.state_id, t);
      executions_ += admitted;
      m.executions += admitted;
      if (cfg_.keep_children) children_appended_ += admitted;
      const std::size_t kind = index_of(slot.state.kind);
      for (std::size_t i = 0; i < admitted; ++i) {
        ++runs[kind];
        if (slot.outcomes[i].feedback.succeeded) ++valid[kind];
        reward_sum[kind] += slot.rewards[i];
      }
      if (admitted < cfg_.group_size) continue;

      update_potential(buffer_, slot.state.state_id, slot.rewards, cfg_.potential);
      const AdvantageGroup adv = advantages(slot.rewards, cfg_.grpo.eps_adv);
      for (std::size_t i = 0; i < admitted; ++i) {
        TrainingSample sample;
        sample.features.assign(slot.features.values.begin(), slot.features.values.end());
        sample.action = slot.actions[i];
        sample.old_logprob = slot.logprobs[sample.action];
        sample.ref_logprob = slot.ref_logprobs[sample.action];
        sample.advantage = adv.advantages[i];
        sample.behavior_version = slot.behavior_version;
        p.batch.push_back(std::move(sample));
      }
    }

    std::size_t total_runs = 0;
    double total_reward = 0.0;
    for (std::size_t k2 = 0; k2 < kNumKinds; ++k2) {
      if (runs[k2] == 0) continue;
      const auto n = static_cast<double>(runs[k2]);
      m.valid_rate[k2] = static_cast<double>(valid[k2]) / n;
      m.mean_reward_by_kind[k2] = reward_sum[k2] / n;
      total_runs += runs[k2];
      total_reward += reward_sum[k2];
    }
    if (total_runs > 0) m.mean_reward = total_reward / static_cast<double>(total_runs);
    m.buffer_size = buffer_.size();
    m.ticks_total = gate_.spent();
    m.ticks_step = m.ticks_total - ticks_before;
    return p;
  }

  /// Applies the learner update for a committed step and fills the policy-side metrics.
  void finish_update(PendingStep& p) {
    StepMetrics& m = p.metrics;
    if (!p.batch.empty()) {
      const UpdateReport report = update(policy_, opt_, p.batch, cfg_.grpo);
      m.update_applied = report.applied;
      m.loss = report.loss;
      m.surrogate = report.surrogate;
      m.kl = report.kl;
      m.policy_entropy = report.entropy;
      m.grad_norm = report.grad_norm;
    }
    m.policy_version = policy_.version();
    m.eval_reward = probes_.expected_reward(policy_, cfg_.grpo.rollout_temperature);
  }

  const RunConfig& cfg_;
  std::vector<SyntheticTask> suite_;
  ProbeSet probes_;
  EvolvingBuffer buffer_;
  std::unordered_map<const TaskInstance*, std::size_t> task_of_;
  ToyPolicy policy_;
  OptimizerState opt_;
  BudgetGate gate_;
  std::size_t executions_ = 0;
  std::size_t children_appended_ = 0;
};

}  // namespace

ProbeSet::ProbeSet(const std::vector<SyntheticTask>& suite, const EnvParams& env,
                   const RewardParams& reward) {
  const std::size_t mid_action = env.num_actions() / 2;
  for (const auto& task : suite) {
    ContextState draft;
    draft.instance = task.instance;
    draft.kind = TaskKind::Draft;
    const double draft_score = humanrank(
        performance_mean(task, draft, env.quality_levels[mid_action], env), task.leaderboard);
    const std::array<ContextState, 3> probes = {
        draft,
        transition(draft, 0, ExecFeedback::failure(ErrorClass::RuntimeError, 1), kInvalidScore,
                   0.0),
        transition(draft, 0, ExecFeedback::success(), draft_score, 0.0),
    };
    for (const auto& probe : probes) {
      std::vector<double> values(env.num_actions());
      for (std::size_t a = 0; a < values.size(); ++a) {
        values[a] = expected_shaped_reward(task, probe, a, env, reward);
      }
      features_.push_back(make_features(probe));
      kinds_.push_back(probe.kind);
      action_values_.push_back(std::move(values));
    }
  }
}

double ProbeSet::expected_reward(const ToyPolicy& policy, double temperature) const {
  double total = 0.0;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto probs = action_distribution(policy, features_[i].view(), temperature);
    for (std::size_t a = 0; a < probs.size(); ++a) total += probs[a] * action_values_[i][a];
  }
  return features_.empty() ? 0.0 : total / static_cast<double>(features_.size());
}

double ProbeSet::expected_reward(const ToyPolicy& policy, double temperature,
                                 TaskKind kind) const {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (kinds_[i] != kind) continue;
    const auto probs = action_distribution(policy, features_[i].view(), temperature);
    for (std::size_t a = 0; a < probs.size(); ++a) total += probs[a] * action_values_[i][a];
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

RunResult run_training(const RunConfig& config, MetricsSink* sink) {
  config.validate();
  Trainer trainer(config);
  return trainer.run(sink);
}

}  // namespace acegrpo
