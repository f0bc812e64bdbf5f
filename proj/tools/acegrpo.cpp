#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <string>

#include "CLI11.hpp"
#include "acegrpo/train_harness.hpp"

namespace fs = std::filesystem;
using namespace acegrpo;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string out_dir;
  std::optional<std::int64_t> steps;
  std::optional<std::int64_t> budget_ticks;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "run seed (overrides ACEGRPO_SEED)");
  cmd->add_option("--mode", f.mode, "sampler mode")->check(CLI::IsMember({"adaptive", "uniform"}));
  cmd->add_option("--out-dir", f.out_dir, "output directory (overrides ACEGRPO_OUT_DIR)");
  cmd->add_option("--steps", f.steps, "outer training steps")->check(CLI::NonNegativeNumber);
  cmd->add_option("--budget-ticks", f.budget_ticks, "execution tick budget")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--workers", f.workers, "rollout worker threads")->check(CLI::PositiveNumber);
}

std::optional<std::string> env_value(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

/// Precedence: flag, then environment, then config file, then built-in default.
RunConfig resolve(const CommonFlags& f, fs::path& out_dir) {
  RunConfig c = f.config_path.empty() ? RunConfig{} : load_config(f.config_path);
  if (const auto s = env_value("ACEGRPO_SEED")) apply_config_value(c, "run.seed", *s);
  if (f.seed) c.seed = *f.seed;
  if (!f.mode.empty()) c.sampler.mode = parse_sampler_mode(f.mode);
  if (f.steps) c.total_steps = *f.steps;
  if (f.budget_ticks) c.execution_budget_ticks = *f.budget_ticks;
  if (f.workers) c.workers = *f.workers;
  c.validate();

  out_dir = "out";
  if (const auto d = env_value("ACEGRPO_OUT_DIR")) out_dir = *d;
  if (!f.out_dir.empty()) out_dir = f.out_dir;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::out | std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

class StreamingSink : public MetricsSink {
 public:
  explicit StreamingSink(const fs::path& dir) : writer_(dir) {}
  void on_step(const StepMetrics& m) override { writer_.write(m); }
  void close() { writer_.close(); }

 private:
  MetricsWriter writer_;
};

int cmd_train(const CommonFlags& f, bool pipelined, bool nondeterministic) {
  fs::path out_dir;
  RunConfig c = resolve(f, out_dir);
  if (pipelined) c.pipelined_learner = true;
  if (nondeterministic) c.deterministic = false;
  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", to_config_text(c));
  {
    std::ofstream suite_out(out_dir / "suite.jsonl");
    write_suite(suite_out, make_task_suite(c.num_tasks, c.suite_seed), c.suite_seed);
    suite_out.close();
    if (!suite_out) throw std::runtime_error("failed writing " + (out_dir / "suite.jsonl").string());
  }

  StreamingSink sink(out_dir);
  const RunResult r = run_training(c, &sink);
  sink.close();

  std::string buffer_text;
  for (const auto& s : r.final_states) buffer_text += to_record_line(s) + '\n';
  write_text(out_dir / "buffer.jsonl", buffer_text);

  std::cout << "steps " << r.metrics.size() << ", executions " << r.executions
            << ", buffer " << r.final_states.size() << ", ticks " << r.ticks_total
            << (r.budget_exhausted ? " (budget exhausted)" : "") << '\n';
  if (!r.metrics.empty()) {
    std::cout << "final smoothed eval reward " << std::setprecision(6)
              << final_smoothed_reward(r.metrics) << '\n';
  }
  std::cout << "wrote " << out_dir.string() << '\n';
  return 0;
}

int cmd_ablate(const CommonFlags& f, std::size_t num_seeds, std::size_t jobs) {
  fs::path out_dir;
  const RunConfig c = resolve(f, out_dir);
  std::vector<std::uint64_t> seeds(num_seeds);
  std::iota(seeds.begin(), seeds.end(), c.seed);
  const AblationReport report = run_ablation(c, seeds, jobs);

  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", to_config_text(c));
  write_text(out_dir / "ablation.json", to_json(report) + '\n');

  std::cout << std::fixed << std::setprecision(4);
  std::cout << "arm         mean     sd\n";
  for (std::size_t a = 0; a < kAllArms.size(); ++a) {
    std::cout << std::left << std::setw(10) << to_string(kAllArms[a]) << std::right << "  "
              << report.mean[a] << "  " << report.sd[a] << '\n';
  }
  for (const auto& cmp : report.comparisons) {
    std::cout << "full vs " << to_string(cmp.baseline) << ": diff " << cmp.mean_difference
              << ", t " << cmp.t_statistic << ", p " << std::setprecision(6) << cmp.p_value
              << std::setprecision(4) << ", wins " << cmp.wins << '/' << seeds.size() << '\n';
  }
  std::cout << "wrote " << (out_dir / "ablation.json").string() << '\n';
  return 0;
}

int cmd_inspect(const std::string& path, std::size_t top) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto records = read_buffer_records(in);
  std::array<std::size_t, kNumKinds> by_kind{};
  std::map<std::size_t, std::size_t> by_depth;
  for (const auto& r : records) {
    ++by_kind[index_of(r.kind)];
    ++by_depth[r.depth];
  }
  std::cout << "states " << records.size() << '\n';
  for (TaskKind k : kAllKinds) std::cout << "  " << to_string(k) << ' ' << by_kind[index_of(k)] << '\n';
  std::cout << "depth histogram\n";
  for (const auto& [d, n] : by_depth) std::cout << "  " << d << ' ' << n << '\n';

  std::vector<const StateRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->potential > b->potential; });
  std::cout << "top potentials\n";
  for (std::size_t i = 0; i < std::min(top, order.size()); ++i) {
    const auto& r = *order[i];
    std::cout << "  id " << r.state_id << ' ' << r.instance_id << ' ' << to_string(r.kind)
              << " depth " << r.depth << " potential " << r.potential << " visits "
              << r.visit_times.size() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolving-buffer GRPO training harness"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  bool pipelined = false;
  bool nondeterministic = false;
  auto* train = app.add_subcommand("train", "run one training job");
  add_common(train, train_flags);
  train->add_flag("--pipelined", pipelined, "overlap the learner update with the next rollouts");
  train->add_flag("--nondeterministic", nondeterministic,
                  "let workers commit as they finish (state ids become timing dependent)");

  CommonFlags ablate_flags;
  std::size_t num_seeds = 10;
  std::size_t jobs = 1;
  auto* ablate = app.add_subcommand("ablate", "run the full, no-buffer and uniform arms");
  add_common(ablate, ablate_flags);
  ablate->add_option("--seeds", num_seeds, "number of consecutive seeds starting at --seed")
      ->check(CLI::Range(2, 1000));
  ablate->add_option("--jobs", jobs, "runs executed in parallel")->check(CLI::PositiveNumber);

  std::string buffer_path;
  std::size_t top = 10;
  auto* inspect = app.add_subcommand("inspect-buffer", "summarize a buffer.jsonl snapshot");
  inspect->add_option("path", buffer_path, "buffer snapshot")->required()->check(CLI::ExistingFile);
  inspect->add_option("--top", top, "states listed by potential");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_flags, pipelined, nondeterministic);
    if (*ablate) return cmd_ablate(ablate_flags, num_seeds, jobs);
    if (*inspect) return cmd_inspect(buffer_path, top);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
