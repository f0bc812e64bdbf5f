#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "acegrpo/train_harness.hpp"

namespace acegrpo {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config '" + key + "': expected a number, got '" + value + "'");
  }
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("config '" + key + "': expected a non-negative integer, got '" +
                                value + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <typename Field>
Setter real(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    field(c) = to_double(k, v);
  };
}

template <typename Field>
Setter whole(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_unsigned(k, v));
  };
}

template <typename Field>
Setter flag(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    field(c) = to_bool(k, v);
  };
}

void add_stage(std::map<std::string, Setter>& table, const std::string& name,
               StageParams& (*pick)(RunConfig&)) {
  const std::string p = "sampler." + name + ".";
  table[p + "rho"] = real([pick](RunConfig& c) -> double& { return pick(c).focusing_rho; });
  table[p + "min_weight_ratio"] =
      real([pick](RunConfig& c) -> double& { return pick(c).min_weight_ratio; });
  table[p + "exploration_eps"] =
      real([pick](RunConfig& c) -> double& { return pick(c).exploration_eps; });
  table[p + "top_percentile"] =
      real([pick](RunConfig& c) -> double& { return pick(c).top_percentile; });
  table[p + "hard_block"] = whole([pick](RunConfig& c) -> int& { return pick(c).hard_block; });
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["run.total_steps"] = whole([](RunConfig& c) -> std::int64_t& { return c.total_steps; });
    t["run.rollout_tasks_per_step"] =
        whole([](RunConfig& c) -> std::size_t& { return c.rollout_tasks_per_step; });
    t["run.group_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.group_size = to_unsigned(k, v);
      c.grpo.group_size = c.group_size;
    };
    t["run.global_batch"] = whole([](RunConfig& c) -> std::size_t& { return c.global_batch; });
    t["run.budget_ticks"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "none" || v.empty()) {
        c.execution_budget_ticks.reset();
      } else {
        c.execution_budget_ticks = static_cast<std::int64_t>(to_unsigned(k, v));
      }
    };
    t["run.num_tasks"] = whole([](RunConfig& c) -> std::size_t& { return c.num_tasks; });
    t["run.suite_seed"] = whole([](RunConfig& c) -> std::uint64_t& { return c.suite_seed; });
    t["run.seed"] = whole([](RunConfig& c) -> std::uint64_t& { return c.seed; });
    t["run.workers"] = whole([](RunConfig& c) -> std::size_t& { return c.workers; });
    t["run.pipelined_learner"] = flag([](RunConfig& c) -> bool& { return c.pipelined_learner; });
    t["run.deterministic"] = flag([](RunConfig& c) -> bool& { return c.deterministic; });
    t["run.keep_children"] = flag([](RunConfig& c) -> bool& { return c.keep_children; });

    t["sampler.mode"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.sampler.mode = parse_sampler_mode(v);
    };
    add_stage(t, "early", [](RunConfig& c) -> StageParams& { return c.sampler.schedule.early; });
    add_stage(t, "mid", [](RunConfig& c) -> StageParams& { return c.sampler.schedule.mid; });
    add_stage(t, "late", [](RunConfig& c) -> StageParams& { return c.sampler.schedule.late; });
    t["sampler.mid_threshold"] =
        whole([](RunConfig& c) -> std::size_t& { return c.sampler.schedule.mid_threshold; });
    t["sampler.late_threshold"] =
        whole([](RunConfig& c) -> std::size_t& { return c.sampler.schedule.late_threshold; });
    t["sampler.cooling_gamma"] = real([](RunConfig& c) -> double& { return c.sampler.cooling.gamma; });
    t["sampler.cooling_eta"] = real([](RunConfig& c) -> double& { return c.sampler.cooling.eta; });
    t["sampler.draft_multiplier"] =
        real([](RunConfig& c) -> double& { return c.sampler.type_weights.draft; });
    t["sampler.debug_multiplier"] =
        real([](RunConfig& c) -> double& { return c.sampler.type_weights.debug; });
    t["sampler.improve_multiplier"] =
        real([](RunConfig& c) -> double& { return c.sampler.type_weights.improve; });

    t["reward.alpha"] = real([](RunConfig& c) -> double& { return c.reward.alpha_improve; });
    t["reward.epsilon"] = real([](RunConfig& c) -> double& { return c.reward.epsilon_stab; });

    t["potential.uncertainty_weight"] =
        real([](RunConfig& c) -> double& { return c.potential.uncertainty_weight; });
    t["potential.headroom_weight"] =
        real([](RunConfig& c) -> double& { return c.potential.headroom_weight; });
    t["potential.std_clip"] = real([](RunConfig& c) -> double& { return c.potential.std_clip; });
    t["potential.p_init"] = real([](RunConfig& c) -> double& { return c.potential.p_init; });

    t["grpo.clip_delta"] = real([](RunConfig& c) -> double& { return c.grpo.clip_delta; });
    t["grpo.kl_coeff"] = real([](RunConfig& c) -> double& { return c.grpo.kl_coeff; });
    t["grpo.entropy_coeff"] = real([](RunConfig& c) -> double& { return c.grpo.entropy_coeff; });
    t["grpo.eps_adv"] = real([](RunConfig& c) -> double& { return c.grpo.eps_adv; });
    t["grpo.rollout_temperature"] =
        real([](RunConfig& c) -> double& { return c.grpo.rollout_temperature; });

    t["optim.learning_rate"] = real([](RunConfig& c) -> double& { return c.optimizer.learning_rate; });
    t["optim.beta1"] = real([](RunConfig& c) -> double& { return c.optimizer.beta1; });
    t["optim.beta2"] = real([](RunConfig& c) -> double& { return c.optimizer.beta2; });
    t["optim.weight_decay"] = real([](RunConfig& c) -> double& { return c.optimizer.weight_decay; });
    t["optim.grad_clip_norm"] =
        real([](RunConfig& c) -> double& { return c.optimizer.grad_clip_norm; });
    t["optim.epsilon"] = real([](RunConfig& c) -> double& { return c.optimizer.epsilon; });

    t["env.quality_levels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.env.quality_levels = to_list(k, v);
    };
    t["env.noise_sigma"] = real([](RunConfig& c) -> double& { return c.env.noise_sigma; });
    t["env.debug_rescue_bonus"] =
        real([](RunConfig& c) -> double& { return c.env.debug_rescue_bonus; });
    t["env.improve_gain"] = real([](RunConfig& c) -> double& { return c.env.improve_gain; });
    t["env.seed"] = whole([](RunConfig& c) -> std::uint64_t& { return c.env.rng_seed; });
    t["env.min_ticks"] = real([](RunConfig& c) -> double& { return c.env.min_ticks; });
    t["env.max_ticks"] = real([](RunConfig& c) -> double& { return c.env.max_ticks; });
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (rollout_tasks_per_step == 0) throw std::invalid_argument("rollout_tasks_per_step must be > 0");
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (rollout_tasks_per_step * group_size != global_batch) {
    throw std::invalid_argument("rollout_tasks_per_step x group_size (" +
                                std::to_string(rollout_tasks_per_step) + " x " +
                                std::to_string(group_size) + ") must equal global_batch (" +
                                std::to_string(global_batch) + ")");
  }
  if (grpo.group_size != group_size) {
    throw std::invalid_argument("grpo.group_size must equal run.group_size");
  }
  if (execution_budget_ticks && *execution_budget_ticks <= 0) {
    throw std::invalid_argument("execution budget must be positive");
  }
  if (num_tasks == 0) throw std::invalid_argument("num_tasks must be > 0");
  if (workers == 0) throw std::invalid_argument("workers must be > 0");
  reward.validate();
  potential.validate();
  sampler.validate();
  grpo.validate();
  optimizer.validate();
  env.validate();
}

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second(config, key, value);
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    try {
      apply_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  const auto stage = [&](const char* name, const StageParams& s) {
    out << "sampler." << name << ".rho = " << s.focusing_rho << '\n'
        << "sampler." << name << ".min_weight_ratio = " << s.min_weight_ratio << '\n'
        << "sampler." << name << ".exploration_eps = " << s.exploration_eps << '\n'
        << "sampler." << name << ".top_percentile = " << s.top_percentile << '\n'
        << "sampler." << name << ".hard_block = " << s.hard_block << '\n';
  };
  out << "run.total_steps = " << c.total_steps << '\n'
      << "run.rollout_tasks_per_step = " << c.rollout_tasks_per_step << '\n'
      << "run.group_size = " << c.group_size << '\n'
      << "run.global_batch = " << c.global_batch << '\n'
      << "run.budget_ticks = "
      << (c.execution_budget_ticks ? std::to_string(*c.execution_budget_ticks) : "none") << '\n'
      << "run.num_tasks = " << c.num_tasks << '\n'
      << "run.suite_seed = " << c.suite_seed << '\n'
      << "run.seed = " << c.seed << '\n'
      << "run.workers = " << c.workers << '\n'
      << "run.pipelined_learner = " << (c.pipelined_learner ? "true" : "false") << '\n'
      << "run.deterministic = " << (c.deterministic ? "true" : "false") << '\n'
      << "run.keep_children = " << (c.keep_children ? "true" : "false") << '\n'
      << "sampler.mode = " << to_string(c.sampler.mode) << '\n';
  stage("early", c.sampler.schedule.early);
  stage("mid", c.sampler.schedule.mid);
  stage("late", c.sampler.schedule.late);
  out << "sampler.mid_threshold = " << c.sampler.schedule.mid_threshold << '\n'
      << "sampler.late_threshold = " << c.sampler.schedule.late_threshold << '\n'
      << "sampler.cooling_gamma = " << c.sampler.cooling.gamma << '\n'
      << "sampler.cooling_eta = " << c.sampler.cooling.eta << '\n'
      << "sampler.draft_multiplier = " << c.sampler.type_weights.draft << '\n'
      << "sampler.debug_multiplier = " << c.sampler.type_weights.debug << '\n'
      << "sampler.improve_multiplier = " << c.sampler.type_weights.improve << '\n'
      << "reward.alpha = " << c.reward.alpha_improve << '\n'
      << "reward.epsilon = " << c.reward.epsilon_stab << '\n'
      << "potential.uncertainty_weight = " << c.potential.uncertainty_weight << '\n'
      << "potential.headroom_weight = " << c.potential.headroom_weight << '\n'
      << "potential.std_clip = " << c.potential.std_clip << '\n'
      << "potential.p_init = " << c.potential.p_init << '\n'
      << "grpo.clip_delta = " << c.grpo.clip_delta << '\n'
      << "grpo.kl_coeff = " << c.grpo.kl_coeff << '\n'
      << "grpo.entropy_coeff = " << c.grpo.entropy_coeff << '\n'
      << "grpo.eps_adv = " << c.grpo.eps_adv << '\n'
      << "grpo.rollout_temperature = " << c.grpo.rollout_temperature << '\n'
      << "optim.learning_rate = " << c.optimizer.learning_rate << '\n'
      << "optim.beta1 = " << c.optimizer.beta1 << '\n'
      << "optim.beta2 = " << c.optimizer.beta2 << '\n'
      << "optim.weight_decay = " << c.optimizer.weight_decay << '\n'
      << "optim.grad_clip_norm = " << c.optimizer.grad_clip_norm << '\n'
      << "optim.epsilon = " << c.optimizer.epsilon << '\n'
      << "env.quality_levels = ";
  for (std::size_t i = 0; i < c.env.quality_levels.size(); ++i) {
    out << (i ? "," : "") << c.env.quality_levels[i];
  }
  out << '\n'
      << "env.noise_sigma = " << c.env.noise_sigma << '\n'
      << "env.debug_rescue_bonus = " << c.env.debug_rescue_bonus << '\n'
      << "env.improve_gain = " << c.env.improve_gain << '\n'
      << "env.seed = " << c.env.rng_seed << '\n'
      << "env.min_ticks = " << c.env.min_ticks << '\n'
      << "env.max_ticks = " << c.env.max_ticks << '\n';
  return out.str();
}

}  // namespace acegrpo
