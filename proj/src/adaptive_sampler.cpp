#include "acegrpo/adaptive_sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace acegrpo {

void StageParams::validate() const {
  if (!(focusing_rho >= 0.0)) throw std::invalid_argument("focusing rho must be >= 0");
  if (!(min_weight_ratio > 0.0 && min_weight_ratio <= 1.0)) {
    throw std::invalid_argument("min weight ratio must lie in (0,1]");
  }
  if (!(exploration_eps >= 0.0 && exploration_eps <= 1.0)) {
    throw std::invalid_argument("exploration epsilon must lie in [0,1]");
  }
  if (!(top_percentile > 0.0 && top_percentile <= 1.0)) {
    throw std::invalid_argument("top percentile must lie in (0,1]");
  }
  if (hard_block < 1) throw std::invalid_argument("hard block interval must be positive");
}

std::string_view to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::Early:
      return "early";
    case Stage::Mid:
      return "mid";
    case Stage::Late:
      return "late";
  }
  return "unknown";
}

void StageSchedule::validate() const {
  early.validate();
  mid.validate();
  late.validate();
  if (!(mid_threshold < late_threshold)) {
    throw std::invalid_argument("stage thresholds must be strictly increasing");
  }
}

Stage StageSchedule::stage_of(std::size_t buffer_size) const noexcept {
  if (buffer_size < mid_threshold) return Stage::Early;
  if (buffer_size < late_threshold) return Stage::Mid;
  return Stage::Late;
}

const StageParams& StageSchedule::params(Stage stage) const noexcept {
  switch (stage) {
    case Stage::Early:
      return early;
    case Stage::Mid:
      return mid;
    case Stage::Late:
      break;
  }
  return late;
}

const StageParams& stage_for(std::size_t buffer_size, const StageSchedule& schedule) {
  return schedule.params(schedule.stage_of(buffer_size));
}

void CoolingParams::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("cooling gamma must lie in [0,1)");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("cooling eta must lie in (0,1)");
}

void TypeWeights::validate() const {
  if (!(draft > 0.0 && debug > 0.0 && improve > 0.0)) {
    throw std::invalid_argument("type multipliers must be positive");
  }
}

double TypeWeights::multiplier(TaskKind kind) const noexcept {
  switch (kind) {
    case TaskKind::Draft:
      return draft;
    case TaskKind::Debug:
      return debug;
    case TaskKind::Improve:
      break;
  }
  return improve;
}

std::string_view to_string(SamplerMode mode) noexcept {
  return mode == SamplerMode::Adaptive ? "adaptive" : "uniform";
}

SamplerMode parse_sampler_mode(std::string_view text) {
  if (text == "adaptive") return SamplerMode::Adaptive;
  if (text == "uniform") return SamplerMode::Uniform;
  throw std::invalid_argument("unknown sampler mode '" + std::string(text) + "'");
}

void SamplerConfig::validate() const {
  schedule.validate();
  cooling.validate();
  type_weights.validate();
}

namespace {

// Sorts keys best-first: potential desc, depth asc, key asc. Keys must follow insertion order.
template <typename Lookup>
void sort_best_first(std::vector<std::size_t>& keys, Lookup&& lookup) {
  std::sort(keys.begin(), keys.end(), [&](std::size_t a, std::size_t b) {
    const StateSummary& x = lookup(a);
    const StateSummary& y = lookup(b);
    if (x.potential != y.potential) return x.potential > y.potential;
    if (x.depth != y.depth) return x.depth < y.depth;
    return a < b;
  });
}

double normalized_rank(std::size_t position, std::size_t count) {
  return count <= 1 ? 0.0 : static_cast<double>(position) / static_cast<double>(count - 1);
}

std::size_t retained_count(std::size_t n, double top_percentile) {
  const double raw = std::ceil(top_percentile * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

}  // namespace

std::vector<double> ranks_within_kind(std::span<const StateSummary> states) {
  std::array<std::vector<std::size_t>, kNumKinds> by_kind;
  for (std::size_t i = 0; i < states.size(); ++i) by_kind[index_of(states[i].kind)].push_back(i);
  std::vector<double> ranks(states.size(), 0.0);
  for (auto& members : by_kind) {
    sort_best_first(members, [&](std::size_t i) -> const StateSummary& { return states[i]; });
    for (std::size_t pos = 0; pos < members.size(); ++pos) {
      ranks[members[pos]] = normalized_rank(pos, members.size());
    }
  }
  return ranks;
}

double base_weight(double rank, const StageParams& stage) {
  if (!(rank >= 0.0 && rank <= 1.0)) throw std::invalid_argument("rank must lie in [0,1]");
  return std::max(std::pow(1.0 - rank, stage.focusing_rho), stage.min_weight_ratio);
}

double cooling(std::span<const std::int64_t> visit_times, std::int64_t t, const StageParams& stage,
               const CoolingParams& params) {
  if (visit_times.empty()) return 1.0;
  const std::int64_t last = *std::max_element(visit_times.begin(), visit_times.end());
  if (t - last <= stage.hard_block) return 0.0;
  double factor = 1.0;
  for (std::int64_t k : visit_times) {
    factor *= 1.0 - params.gamma * std::pow(params.eta, static_cast<double>(t - k));
  }
  return factor;
}

std::optional<SamplingDistribution> build_distribution(const BufferSnapshot& snapshot,
                                                       std::int64_t t,
                                                       const SamplerConfig& config) {
  if (snapshot.states.empty()) throw std::invalid_argument("cannot sample from an empty buffer");
  const Stage stage = config.schedule.stage_of(snapshot.size());
  const StageParams& params = config.schedule.params(stage);
  const auto& states = snapshot.states;

  SamplingDistribution dist;
  dist.stage = stage;
  std::vector<double> cool;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const double c = cooling(states[i].visit_times, t, params, config.cooling);
    if (c > 0.0) {
      dist.snapshot_index.push_back(i);
      dist.ids.push_back(states[i].id);
      cool.push_back(c);
    }
  }
  const std::size_t eligible = dist.ids.size();
  if (eligible == 0) return std::nullopt;

  const double uniform = 1.0 / static_cast<double>(eligible);
  if (config.mode == SamplerMode::Uniform) {
    dist.probs.assign(eligible, uniform);
    return dist;
  }

  std::array<std::vector<std::size_t>, kNumKinds> by_kind;
  for (std::size_t e = 0; e < eligible; ++e) {
    by_kind[index_of(states[dist.snapshot_index[e]].kind)].push_back(e);
  }
  std::vector<double> raw(eligible, 0.0);
  const auto summary = [&](std::size_t e) -> const StateSummary& {
    return states[dist.snapshot_index[e]];
  };
  for (auto& group : by_kind) {
    if (group.empty()) continue;
    sort_best_first(group, summary);
    const std::size_t kept = retained_count(group.size(), params.top_percentile);
    for (std::size_t pos = 0; pos < kept; ++pos) {
      const std::size_t e = group[pos];
      const auto kind = states[dist.snapshot_index[e]].kind;
      raw[e] = base_weight(normalized_rank(pos, kept), params) *
               config.type_weights.multiplier(kind) * cool[e];
    }
  }
  const double z = std::accumulate(raw.begin(), raw.end(), 0.0);
  const double eps = params.exploration_eps;
  dist.probs.resize(eligible);
  for (std::size_t e = 0; e < eligible; ++e) {
    dist.probs[e] = (1.0 - eps) * (raw[e] / z) + eps * uniform;
  }
  return dist;
}

std::vector<StateId> sample_batch(const SamplingDistribution& dist, std::size_t k,
                                  std::mt19937_64& rng) {
  std::vector<double> weights = dist.probs;
  const auto positive = static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [](double p) { return p > 0.0; }));
  if (positive < k) {
    throw std::invalid_argument("sample_batch: support of " + std::to_string(positive) +
                                " states is smaller than k=" + std::to_string(k));
  }
  std::vector<StateId> batch;
  batch.reserve(k);
  for (std::size_t draw = 0; draw < k; ++draw) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double cumulative = 0.0;
    std::size_t pick = weights.size();
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last_positive = i;
      cumulative += weights[i];
      if (u < cumulative) {
        pick = i;
        break;
      }
    }
    if (pick == weights.size()) pick = last_positive;  // u landed on rounding slack
    batch.push_back(dist.ids[pick]);
    weights[pick] = 0.0;
  }
  return batch;
}

std::vector<StateId> sample_batch(const SamplingDistribution& dist, std::size_t k,
                                  std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  return sample_batch(dist, k, rng);
}

SamplerDiagnostics diagnose(const SamplingDistribution& dist, const BufferSnapshot& snapshot) {
  SamplerDiagnostics diag;
  diag.stage = dist.stage;
  for (std::size_t e = 0; e < dist.size(); ++e) {
    const double p = dist.probs[e];
    if (p > 0.0) {
      ++diag.support;
      diag.entropy -= p * std::log(p);
    }
    const auto& spread = snapshot.states.at(dist.snapshot_index[e]).last_group_std;
    if (spread && *spread > 0.0) diag.frontier_mass += p;
  }
  return diag;
}

}  // namespace acegrpo
