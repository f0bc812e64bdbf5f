#include <charconv>
#include <stdexcept>

#include "acegrpo/train_harness.hpp"
#include "json.hpp"

namespace acegrpo {

namespace {

constexpr const char* kMetricsFormat = "acegrpo-metrics";

std::string number(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format metric value");
  return std::string(buf, end);
}

std::string cell(const std::optional<double>& v) { return v ? number(*v) : std::string{}; }

nlohmann::ordered_json per_kind(const std::array<std::optional<double>, kNumKinds>& values) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (TaskKind kind : kAllKinds) {
    const auto& v = values[index_of(kind)];
    out[std::string(to_string(kind))] = v ? nlohmann::ordered_json(*v) : nullptr;
  }
  return out;
}

}  // namespace

std::string to_json_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["executions"] = m.executions;
  j["valid_rate"] = per_kind(m.valid_rate);
  j["mean_reward_by_kind"] = per_kind(m.mean_reward_by_kind);
  j["mean_reward"] = m.mean_reward ? nlohmann::ordered_json(*m.mean_reward) : nullptr;
  j["eval_reward"] = m.eval_reward;
  j["buffer_size"] = m.buffer_size;
  j["stage"] = to_string(m.stage);
  j["support"] = m.support;
  j["entropy"] = m.entropy;
  j["frontier_mass"] = m.frontier_mass;
  j["no_eligible_state"] = m.no_eligible_state;
  j["policy_version"] = m.policy_version;
  j["update_applied"] = m.update_applied;
  j["loss"] = m.loss;
  j["surrogate"] = m.surrogate;
  j["kl"] = m.kl;
  j["policy_entropy"] = m.policy_entropy;
  j["grad_norm"] = m.grad_norm;
  j["ticks_step"] = m.ticks_step;
  j["ticks_total"] = m.ticks_total;
  return j.dump();
}

std::string csv_header() {
  return "step,executions,valid_rate_draft,valid_rate_debug,valid_rate_improve,"
         "mean_reward_draft,mean_reward_debug,mean_reward_improve,mean_reward,eval_reward,"
         "buffer_size,stage,support,entropy,frontier_mass,no_eligible_state,policy_version,"
         "update_applied,loss,surrogate,kl,policy_entropy,grad_norm,ticks_step,ticks_total";
}

std::string to_csv_row(const StepMetrics& m) {
  std::string row = std::to_string(m.step) + ',' + std::to_string(m.executions);
  for (const auto& v : m.valid_rate) row += ',' + cell(v);
  for (const auto& v : m.mean_reward_by_kind) row += ',' + cell(v);
  row += ',' + cell(m.mean_reward);
  row += ',' + number(m.eval_reward);
  row += ',' + std::to_string(m.buffer_size);
  row += ',' + std::string(to_string(m.stage));
  row += ',' + std::to_string(m.support);
  row += ',' + number(m.entropy);
  row += ',' + number(m.frontier_mass);
  row += m.no_eligible_state ? ",1" : ",0";
  row += ',' + std::to_string(m.policy_version);
  row += m.update_applied ? ",1" : ",0";
  row += ',' + number(m.loss);
  row += ',' + number(m.surrogate);
  row += ',' + number(m.kl);
  row += ',' + number(m.policy_entropy);
  row += ',' + number(m.grad_norm);
  row += ',' + std::to_string(m.ticks_step);
  row += ',' + std::to_string(m.ticks_total);
  return row;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& out_dir)
    : jsonl_path_(out_dir / "metrics.jsonl"), csv_path_(out_dir / "metrics.csv") {
  std::filesystem::create_directories(out_dir);
  jsonl_.open(jsonl_path_, std::ios::out | std::ios::trunc);
  csv_.open(csv_path_, std::ios::out | std::ios::trunc);
  if (!jsonl_ || !csv_) throw std::runtime_error("cannot open metrics files in " + out_dir.string());
  nlohmann::ordered_json header;
  header["format"] = kMetricsFormat;
  header["version"] = kMetricsSchemaVersion;
  jsonl_ << header.dump() << '\n';
  csv_ << csv_header() << '\n';
}

void MetricsWriter::write(const StepMetrics& m) {
  jsonl_ << to_json_line(m) << '\n';
  csv_ << to_csv_row(m) << '\n';
}

void MetricsWriter::close() {
  jsonl_.flush();
  csv_.flush();
  const bool ok = jsonl_.good() && csv_.good();
  jsonl_.close();
  csv_.close();
  if (!ok || jsonl_.fail() || csv_.fail()) {
    throw std::runtime_error("failed writing " + jsonl_path_.string() + " or " +
                             csv_path_.string());
  }
}

void emit_metrics(const std::filesystem::path& out_dir, std::span<const StepMetrics> metrics) {
  MetricsWriter writer(out_dir);
  for (const auto& m : metrics) writer.write(m);
  writer.close();
}

}  // namespace acegrpo
