#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace acegrpo {

/// Identifier of a state inside an EvolvingBuffer. Unassigned ids are filled in on append.
struct StateId {
  static constexpr std::uint64_t kUnassigned = ~std::uint64_t{0};
  std::uint64_t value = kUnassigned;

  constexpr bool assigned() const noexcept { return value != kUnassigned; }
  constexpr auto operator<=>(const StateId&) const = default;
};

using SolutionId = std::uint64_t;

enum class TaskKind : std::uint8_t { Draft = 0, Debug = 1, Improve = 2 };
inline constexpr std::array<TaskKind, 3> kAllKinds = {TaskKind::Draft, TaskKind::Debug,
                                                      TaskKind::Improve};
inline constexpr std::size_t kNumKinds = kAllKinds.size();

std::string_view to_string(TaskKind kind) noexcept;
TaskKind parse_kind(std::string_view text);
constexpr std::size_t index_of(TaskKind kind) noexcept { return static_cast<std::size_t>(kind); }

enum class ErrorClass : std::uint8_t { None = 0, RuntimeError = 1, InvalidSubmission = 2 };

std::string_view to_string(ErrorClass error) noexcept;
ErrorClass parse_error_class(std::string_view text);

/// Synthetic stand-in for an execution log: success flag, error class and a traceback code.
struct ExecFeedback {
  bool succeeded = true;
  ErrorClass error_class = ErrorClass::None;
  int detail_code = 0;

  static ExecFeedback success() noexcept { return {}; }
  static ExecFeedback failure(ErrorClass error, int detail_code);

  bool consistent() const noexcept { return succeeded == (error_class == ErrorClass::None); }
  bool operator==(const ExecFeedback&) const = default;
};

struct TaskInstance {
  std::string id;
  std::vector<double> description_features;
  double difficulty = 0.0;
  std::string metric_id;
  std::string leaderboard_id;
};

/// Throws std::invalid_argument when difficulty leaves [0,1] or the feature length differs.
void validate(const TaskInstance& instance, std::size_t feature_dim);

struct HistoryEntry {
  SolutionId solution_id = 0;
  ExecFeedback feedback;
  /// HumanRank score, or -1 for a failed execution.
  double score = 0.0;

  bool operator==(const HistoryEntry&) const = default;
};

struct ContextState {
  StateId state_id;
  std::shared_ptr<const TaskInstance> instance;
  std::optional<SolutionId> code;
  std::vector<HistoryEntry> history;
  TaskKind kind = TaskKind::Draft;
  double potential = 0.0;
  /// Outer iterations at which the state was sampled, oldest first.
  std::vector<std::int64_t> visit_times;
  /// Reward spread of the most recent group rolled out from this state.
  std::optional<double> last_group_std;

  std::size_t depth() const noexcept { return history.size(); }
  std::optional<std::int64_t> last_visit() const noexcept;
};

/// Kind of a state from whether it carries code and the feedback of its latest execution.
TaskKind classify_kind(bool code_present, const std::optional<ExecFeedback>& last_feedback);

/// Returns a description of the first violated ContextState invariant, if any.
std::optional<std::string> check_invariants(const ContextState& state);

/// The transition operator: appends (solution, feedback, score) to the parent's history.
/// The child carries no id until appended to a buffer.
ContextState transition(const ContextState& parent, SolutionId solution_id,
                        const ExecFeedback& feedback, double score, double initial_potential);

class DuplicateIdError : public std::invalid_argument {
 public:
  explicit DuplicateIdError(std::string id);
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

/// Per-state view used by the sampler; copies only the metadata it needs.
struct StateSummary {
  StateId id;
  TaskKind kind = TaskKind::Draft;
  std::size_t depth = 0;
  double potential = 0.0;
  std::vector<std::int64_t> visit_times;
  std::optional<double> last_group_std;
};

/// Consistent prefix of a buffer, in insertion order.
struct BufferSnapshot {
  std::vector<StateSummary> states;
  std::int64_t iteration = 0;

  std::size_t size() const noexcept { return states.size(); }
};

inline constexpr std::size_t kDefaultVisitWindow = 20;

/// Append-only pool of context states. Appends and metadata writes take an exclusive
/// lock; lookups and snapshots take a shared one.
class EvolvingBuffer {
 public:
  /// One Draft state per seed instance, ids 0..n-1 in input order.
  EvolvingBuffer(std::span<const TaskInstance> seed_instances, double initial_potential,
                 std::size_t visit_window = kDefaultVisitWindow);

  EvolvingBuffer(const EvolvingBuffer&) = delete;
  EvolvingBuffer& operator=(const EvolvingBuffer&) = delete;

  StateId append(ContextState child);
  void record_visit(StateId id, std::int64_t t);
  /// Overwrites the potential and group spread of an existing state.
  void set_potential(StateId id, double potential, std::optional<double> group_std);

  ContextState get(StateId id) const;
  bool contains(StateId id) const;
  std::size_t size() const;
  std::size_t count(TaskKind kind) const;

  std::int64_t iteration() const;
  /// t must not go backwards.
  void advance_iteration(std::int64_t t);

  BufferSnapshot snapshot() const;
  std::vector<ContextState> states() const;
  /// Calls fn on each state in insertion order under the shared lock.
  void for_each(const std::function<void(const ContextState&)>& fn) const;

  double initial_potential() const noexcept { return initial_potential_; }
  std::size_t visit_window() const noexcept { return visit_window_; }

 private:
  const ContextState& at_locked(StateId id) const;
  ContextState& at_locked(StateId id);

  mutable std::shared_mutex mutex_;
  std::deque<ContextState> states_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::array<std::size_t, kNumKinds> kind_counts_{};
  std::uint64_t next_id_ = 0;
  std::int64_t iteration_ = 0;
  double initial_potential_;
  std::size_t visit_window_;
};

/// Flat form of one serialized buffer line.
struct StateRecord {
  std::uint64_t state_id = 0;
  std::string instance_id;
  TaskKind kind = TaskKind::Draft;
  std::size_t depth = 0;
  double potential = 0.0;
  std::vector<std::int64_t> visit_times;
  std::vector<HistoryEntry> history;
};

/// One JSON object per line; see docs/formats.md.
void write_buffer_records(std::ostream& out, const EvolvingBuffer& buffer);
std::string to_record_line(const ContextState& state);
std::vector<StateRecord> read_buffer_records(std::istream& in);

}  // namespace acegrpo

template <>
struct std::hash<acegrpo::StateId> {
  std::size_t operator()(const acegrpo::StateId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
