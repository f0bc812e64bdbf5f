#include "acegrpo/context_buffer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>
#include <unordered_set>

#include "json.hpp"

namespace acegrpo {

namespace {

std::string id_text(StateId id) { return std::to_string(id.value); }

}  // namespace

std::string_view to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::Draft:
      return "draft";
    case TaskKind::Debug:
      return "debug";
    case TaskKind::Improve:
      return "improve";
  }
  return "unknown";
}

TaskKind parse_kind(std::string_view text) {
  for (auto kind : kAllKinds) {
    if (to_string(kind) == text) return kind;
  }
  throw std::invalid_argument("unknown task kind '" + std::string(text) + "'");
}

std::string_view to_string(ErrorClass error) noexcept {
  switch (error) {
    case ErrorClass::None:
      return "none";
    case ErrorClass::RuntimeError:
      return "runtime_error";
    case ErrorClass::InvalidSubmission:
      return "invalid_submission";
  }
  return "unknown";
}

ErrorClass parse_error_class(std::string_view text) {
  for (auto error : {ErrorClass::None, ErrorClass::RuntimeError, ErrorClass::InvalidSubmission}) {
    if (to_string(error) == text) return error;
  }
  throw std::invalid_argument("unknown error class '" + std::string(text) + "'");
}

ExecFeedback ExecFeedback::failure(ErrorClass error, int detail_code) {
  if (error == ErrorClass::None) {
    throw std::invalid_argument("failure feedback needs an error class other than none");
  }
  return {false, error, detail_code};
}

void validate(const TaskInstance& instance, std::size_t feature_dim) {
  if (!(instance.difficulty >= 0.0 && instance.difficulty <= 1.0)) {
    throw std::invalid_argument("instance '" + instance.id + "': difficulty outside [0,1]");
  }
  if (instance.description_features.size() != feature_dim) {
    throw std::invalid_argument("instance '" + instance.id + "': expected " +
                                std::to_string(feature_dim) + " description features, got " +
                                std::to_string(instance.description_features.size()));
  }
}

std::optional<std::int64_t> ContextState::last_visit() const noexcept {
  if (visit_times.empty()) return std::nullopt;
  return visit_times.back();
}

TaskKind classify_kind(bool code_present, const std::optional<ExecFeedback>& last_feedback) {
  if (!code_present) {
    if (last_feedback) {
      throw std::logic_error("classify_kind: feedback given for a state without code");
    }
    return TaskKind::Draft;
  }
  if (!last_feedback) {
    throw std::logic_error("classify_kind: code present but no execution feedback");
  }
  return last_feedback->succeeded ? TaskKind::Improve : TaskKind::Debug;
}

std::optional<std::string> check_invariants(const ContextState& state) {
  if (!state.instance) return "state has no task instance";
  const bool has_code = state.code.has_value();
  if (has_code == state.history.empty()) return "code presence disagrees with history";
  std::optional<ExecFeedback> last;
  if (!state.history.empty()) last = state.history.back().feedback;
  if (classify_kind(has_code, last) != state.kind) return "kind disagrees with history";
  for (const auto& entry : state.history) {
    if (!entry.feedback.consistent()) return "feedback success flag disagrees with error class";
    const bool failed = !entry.feedback.succeeded;
    if (failed != (entry.score == -1.0)) return "score/feedback mismatch in history";
    if (!failed && !(entry.score >= 0.0 && entry.score <= 1.0)) return "score outside [0,1]";
  }
  if (has_code && *state.code != state.history.back().solution_id) {
    return "code is not the latest solution";
  }
  if (std::adjacent_find(state.visit_times.begin(), state.visit_times.end(),
                         [](auto a, auto b) { return a >= b; }) != state.visit_times.end()) {
    return "visit times not strictly increasing";
  }
  if (!(state.potential >= 0.0)) return "negative potential";
  return std::nullopt;
}

ContextState transition(const ContextState& parent, SolutionId solution_id,
                        const ExecFeedback& feedback, double score, double initial_potential) {
  if (!feedback.consistent()) {
    throw std::invalid_argument("transition: feedback success flag disagrees with error class");
  }
  if (!feedback.succeeded && score != -1.0) {
    throw std::invalid_argument("transition: failed execution must carry score -1");
  }
  if (feedback.succeeded && !(score >= 0.0 && score <= 1.0)) {
    throw std::invalid_argument("transition: successful execution needs a score in [0,1]");
  }
  ContextState child;
  child.instance = parent.instance;
  child.code = solution_id;
  child.history.reserve(parent.history.size() + 1);
  child.history = parent.history;
  child.history.push_back({solution_id, feedback, score});
  child.kind = classify_kind(true, feedback);
  child.potential = initial_potential;
  return child;
}

DuplicateIdError::DuplicateIdError(std::string id)
    : std::invalid_argument("duplicate id '" + id + "'"), id_(std::move(id)) {}

EvolvingBuffer::EvolvingBuffer(std::span<const TaskInstance> seed_instances,
                               double initial_potential, std::size_t visit_window)
    : initial_potential_(initial_potential), visit_window_(visit_window) {
  if (seed_instances.empty()) throw std::invalid_argument("buffer needs at least one instance");
  if (!(initial_potential >= 0.0)) throw std::invalid_argument("initial potential must be >= 0");
  if (visit_window == 0) throw std::invalid_argument("visit window must be positive");
  std::unordered_set<std::string> seen;
  for (const auto& instance : seed_instances) {
    if (!seen.insert(instance.id).second) throw DuplicateIdError(instance.id);
  }
  for (const auto& instance : seed_instances) {
    ContextState state;
    state.instance = std::make_shared<const TaskInstance>(instance);
    state.kind = TaskKind::Draft;
    state.potential = initial_potential;
    append(std::move(state));
  }
}

StateId EvolvingBuffer::append(ContextState child) {
  std::unique_lock lock(mutex_);
  if (!child.state_id.assigned()) {
    child.state_id = StateId{next_id_};
  } else if (index_.contains(child.state_id.value)) {
    throw DuplicateIdError(id_text(child.state_id));
  }
  const StateId id = child.state_id;
  next_id_ = std::max(next_id_, id.value + 1);
  kind_counts_[index_of(child.kind)] += 1;
  index_.emplace(id.value, states_.size());
  states_.push_back(std::move(child));
  return id;
}

const ContextState& EvolvingBuffer::at_locked(StateId id) const {
  auto it = index_.find(id.value);
  if (it == index_.end()) throw std::out_of_range("unknown state id " + id_text(id));
  return states_[it->second];
}

ContextState& EvolvingBuffer::at_locked(StateId id) {
  return const_cast<ContextState&>(std::as_const(*this).at_locked(id));
}

void EvolvingBuffer::record_visit(StateId id, std::int64_t t) {
  std::unique_lock lock(mutex_);
  auto& state = at_locked(id);
  if (t < iteration_) {
    throw std::invalid_argument("record_visit: t=" + std::to_string(t) +
                                " precedes current iteration " + std::to_string(iteration_));
  }
  if (!state.visit_times.empty() && state.visit_times.back() >= t) {
    throw std::invalid_argument("record_visit: state " + id_text(id) + " already visited at t=" +
                                std::to_string(state.visit_times.back()));
  }
  state.visit_times.push_back(t);
  if (state.visit_times.size() > visit_window_) {
    state.visit_times.erase(state.visit_times.begin());
  }
}

void EvolvingBuffer::set_potential(StateId id, double potential,
                                   std::optional<double> group_std) {
  if (!(potential >= 0.0) || !std::isfinite(potential)) {
    throw std::invalid_argument("potential must be finite and >= 0");
  }
  std::unique_lock lock(mutex_);
  auto& state = at_locked(id);
  state.potential = potential;
  state.last_group_std = group_std;
}

ContextState EvolvingBuffer::get(StateId id) const {
  std::shared_lock lock(mutex_);
  return at_locked(id);
}

bool EvolvingBuffer::contains(StateId id) const {
  std::shared_lock lock(mutex_);
  return index_.contains(id.value);
}

std::size_t EvolvingBuffer::size() const {
  std::shared_lock lock(mutex_);
  return states_.size();
}

std::size_t EvolvingBuffer::count(TaskKind kind) const {
  std::shared_lock lock(mutex_);
  return kind_counts_[index_of(kind)];
}

std::int64_t EvolvingBuffer::iteration() const {
  std::shared_lock lock(mutex_);
  return iteration_;
}

void EvolvingBuffer::advance_iteration(std::int64_t t) {
  std::unique_lock lock(mutex_);
  if (t < iteration_) throw std::invalid_argument("iteration cannot go backwards");
  iteration_ = t;
}

BufferSnapshot EvolvingBuffer::snapshot() const {
  std::shared_lock lock(mutex_);
  BufferSnapshot snap;
  snap.iteration = iteration_;
  snap.states.reserve(states_.size());
  for (const auto& state : states_) {
    snap.states.push_back({state.state_id, state.kind, state.depth(), state.potential,
                           state.visit_times, state.last_group_std});
  }
  return snap;
}

std::vector<ContextState> EvolvingBuffer::states() const {
  std::shared_lock lock(mutex_);
  return {states_.begin(), states_.end()};
}

void EvolvingBuffer::for_each(const std::function<void(const ContextState&)>& fn) const {
  std::shared_lock lock(mutex_);
  for (const auto& state : states_) fn(state);
}

std::string to_record_line(const ContextState& state) {
  nlohmann::ordered_json line;
  line["state_id"] = state.state_id.value;
  line["instance"] = state.instance ? state.instance->id : std::string{};
  line["kind"] = to_string(state.kind);
  line["depth"] = state.depth();
  line["potential"] = state.potential;
  line["visit_times"] = state.visit_times;
  auto history = nlohmann::json::array();
  for (const auto& entry : state.history) {
    history.push_back({entry.solution_id, to_string(entry.feedback.error_class),
                       entry.feedback.detail_code, entry.score});
  }
  line["history"] = std::move(history);
  return line.dump();
}

void write_buffer_records(std::ostream& out, const EvolvingBuffer& buffer) {
  buffer.for_each([&](const ContextState& state) { out << to_record_line(state) << '\n'; });
}

std::vector<StateRecord> read_buffer_records(std::istream& in) {
  std::vector<StateRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StateRecord rec;
      rec.state_id = j.at("state_id").get<std::uint64_t>();
      rec.instance_id = j.at("instance").get<std::string>();
      rec.kind = parse_kind(j.at("kind").get<std::string>());
      rec.depth = j.at("depth").get<std::size_t>();
      rec.potential = j.at("potential").get<double>();
      rec.visit_times = j.at("visit_times").get<std::vector<std::int64_t>>();
      for (const auto& h : j.at("history")) {
        HistoryEntry entry;
        entry.solution_id = h.at(0).get<SolutionId>();
        const auto error = parse_error_class(h.at(1).get<std::string>());
        entry.feedback = {error == ErrorClass::None, error, h.at(2).get<int>()};
        entry.score = h.at(3).get<double>();
        rec.history.push_back(entry);
      }
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error("buffer record line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace acegrpo
