#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "acegrpo/train_harness.hpp"
#include "json.hpp"

namespace acegrpo {

namespace {

double mean_of(std::span<const double> xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (divisor n - 1).
double sd_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

double final_smoothed_reward(std::span<const StepMetrics> metrics, std::size_t window) {
  if (metrics.empty()) throw std::invalid_argument("final_smoothed_reward: no metrics");
  if (window == 0) throw std::invalid_argument("final_smoothed_reward: window must be > 0");
  const std::size_t n = std::min(window, metrics.size());
  double total = 0.0;
  for (std::size_t i = metrics.size() - n; i < metrics.size(); ++i) total += metrics[i].eval_reward;
  return total / static_cast<double>(n);
}

std::vector<double> smoothed_eval_curve(std::span<const StepMetrics> metrics, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smoothed_eval_curve: window must be > 0");
  std::vector<double> out(metrics.size());
  double running = 0.0;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    running += metrics[i].eval_reward;
    if (i >= window) running -= metrics[i - window].eval_reward;
    out[i] = running / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

std::string_view to_string(Arm arm) noexcept {
  switch (arm) {
    case Arm::Full: return "full";
    case Arm::NoBuffer: return "no_buffer";
    case Arm::Uniform: return "uniform";
  }
  return "unknown";
}

RunConfig arm_config(const RunConfig& base, Arm arm, std::uint64_t seed) {
  RunConfig c = base;
  c.seed = seed;
  switch (arm) {
    case Arm::Full:
      c.keep_children = true;
      c.sampler.mode = SamplerMode::Adaptive;
      break;
    case Arm::NoBuffer:
      c.keep_children = false;
      c.sampler.mode = SamplerMode::Adaptive;
      break;
    case Arm::Uniform:
      c.keep_children = true;
      c.sampler.mode = SamplerMode::Uniform;
      break;
  }
  return c;
}

PairedComparison paired_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired test: size mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired test: need at least two pairs");
  std::vector<double> d(a.size());
  PairedComparison out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d[i] = a[i] - b[i];
    if (d[i] > 0.0) ++out.wins;
  }
  out.mean_difference = mean_of(d);
  out.sd_difference = sd_of(d);
  const double n = static_cast<double>(d.size());
  if (out.sd_difference == 0.0) {
    out.t_statistic = out.mean_difference > 0.0   ? std::numeric_limits<double>::infinity()
                      : out.mean_difference < 0.0 ? -std::numeric_limits<double>::infinity()
                                                  : 0.0;
    out.p_value = out.mean_difference > 0.0 ? 0.0 : out.mean_difference < 0.0 ? 1.0 : 0.5;
    return out;
  }
  out.t_statistic = out.mean_difference / (out.sd_difference / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.t_statistic));
  return out;
}

AblationReport run_ablation(const RunConfig& config, std::span<const std::uint64_t> seeds,
                            std::size_t parallel_runs) {
  if (seeds.size() < 2) throw std::invalid_argument("ablation needs at least two seeds");
  AblationReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  for (auto& v : report.final_reward) v.assign(seeds.size(), 0.0);
  for (auto& v : report.final_buffer_size) v.assign(seeds.size(), 0);

  const std::size_t jobs = kAllArms.size() * seeds.size();
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  const auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t arm = j % kAllArms.size();
      const std::size_t s = j / kAllArms.size();
      try {
        const RunResult r = run_training(arm_config(config, kAllArms[arm], seeds[s]));
        report.final_reward[arm][s] = final_smoothed_reward(r.metrics);
        report.final_buffer_size[arm][s] = r.final_states.size();
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  {
    const std::size_t threads = std::clamp<std::size_t>(parallel_runs, 1, jobs);
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t arm = 0; arm < kAllArms.size(); ++arm) {
    report.mean[arm] = mean_of(report.final_reward[arm]);
    report.sd[arm] = sd_of(report.final_reward[arm]);
  }
  const auto& full = report.final_reward[static_cast<std::size_t>(Arm::Full)];
  for (Arm baseline : {Arm::NoBuffer, Arm::Uniform}) {
    PairedComparison c = paired_one_sided(full, report.final_reward[static_cast<std::size_t>(baseline)]);
    c.baseline = baseline;
    report.comparisons.push_back(c);
  }
  return report;
}

std::string to_json(const AblationReport& report) {
  nlohmann::ordered_json j;
  j["seeds"] = report.seeds;
  nlohmann::ordered_json arms = nlohmann::ordered_json::object();
  for (std::size_t arm = 0; arm < kAllArms.size(); ++arm) {
    nlohmann::ordered_json a;
    a["final_reward"] = report.final_reward[arm];
    a["mean"] = report.mean[arm];
    a["sd"] = report.sd[arm];
    a["final_buffer_size"] = report.final_buffer_size[arm];
    arms[std::string(to_string(kAllArms[arm]))] = a;
  }
  j["arms"] = arms;
  nlohmann::ordered_json comps = nlohmann::ordered_json::array();
  for (const auto& c : report.comparisons) {
    nlohmann::ordered_json o;
    o["comparison"] = "full_vs_" + std::string(to_string(c.baseline));
    o["mean_difference"] = c.mean_difference;
    o["sd_difference"] = c.sd_difference;
    o["t_statistic"] = std::isfinite(c.t_statistic) ? nlohmann::ordered_json(c.t_statistic)
                                                    : nlohmann::ordered_json(nullptr);
    o["p_value"] = c.p_value;
    o["wins"] = c.wins;
    comps.push_back(o);
  }
  j["comparisons"] = comps;
  return j.dump(2);
}

}  // namespace acegrpo
