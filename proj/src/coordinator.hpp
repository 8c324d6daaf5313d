#pragma once

#include <atomic>
#include <memory>

#include "learner.hpp"
#include "wire.hpp"

namespace guiq {

/// Linear epsilon decay by global action count.
struct EpsilonSchedule {
    double eps_start = 1.0;
    double eps_end = 0.05;
    std::uint64_t decay_steps = 50000;

    void validate() const;
    double at(std::uint64_t global_actions) const;
};

nlohmann::json epsilon_schedule_to_json(const EpsilonSchedule& s);
EpsilonSchedule epsilon_schedule_from_json(const nlohmann::json& doc);

/// Immutable published model; sessions decide against their local copy.
struct ModelSnapshot {
    MlpParams params;
    EncoderConfig encoder;
    std::uint64_t version = 0;
    std::shared_ptr<const std::string> blob; // serialized checkpoint (wire transfer)
};

std::shared_ptr<const ModelSnapshot> snapshot_from_checkpoint(const Checkpoint& ckpt,
                                                              bool with_blob);

class ModelHub {
public:
    void publish(std::shared_ptr<const ModelSnapshot> snapshot);
    std::shared_ptr<const ModelSnapshot> latest() const;

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const ModelSnapshot> latest_;
};

/// Q values for every candidate under a snapshot, plus the argmax ordinal
/// (ties -> lowest ordinal).
struct QEvaluation {
    std::vector<double> q_values;
    std::size_t chosen = 0;
};

QEvaluation evaluate_q(const ModelSnapshot& snapshot, const GuiState& state,
                       std::span<const ActionSpec> candidates, FunctionId goal,
                       const FunctionTable& table);

/// Epsilon-greedy: with probability eps a uniform candidate, otherwise the
/// argmax under the snapshot.
ActionSpec select_action(const ModelSnapshot& snapshot, const GuiState& state,
                         std::span<const ActionSpec> candidates, FunctionId goal,
                         const FunctionTable& table, double eps, Rng& rng);

// ---- server ------------------------------------------------------------------

/// Transport-independent request handler behind both the in-process link and
/// the socket server. Thread-safe.
class ServerCore {
public:
    ServerCore(std::shared_ptr<const AppModel> model, ModelHub& hub, SequenceQueue& intake);

    nlohmann::json handle(const nlohmann::json& request);

    std::uint64_t sequences_accepted() const { return sequences_accepted_; }

private:
    nlohmann::json handle_hello(const nlohmann::json& request);
    nlohmann::json handle_get_q(const nlohmann::json& request);
    nlohmann::json handle_add_training_data(const nlohmann::json& request);
    nlohmann::json handle_get_model(const nlohmann::json& request);

    std::shared_ptr<const AppModel> model_;
    ModelHub& hub_;
    SequenceQueue& intake_;
    std::mutex mutex_;
    std::set<std::string> sessions_;
    std::atomic<std::uint64_t> sequences_accepted_{0};
};

/// Session-side view of the coordinator. get_q/add_training_data mirror the
/// two worker interfaces; fetch_model returns a newer snapshot or nullptr.
class CoordinatorLink {
public:
    virtual ~CoordinatorLink() = default;
    virtual void hello(const std::string& session_id, std::uint64_t app_fingerprint) = 0;
    virtual QEvaluation get_q(const std::string& session_id, const GuiState& state,
                              std::span<const ActionSpec> candidates, FunctionId goal) = 0;
    virtual std::size_t add_training_data(const EpisodeSequence& seq) = 0;
    virtual std::shared_ptr<const ModelSnapshot> fetch_model(std::uint64_t have_version) = 0;
};

/// Direct calls into a ServerCore; no transport, fully deterministic.
class InProcLink : public CoordinatorLink {
public:
    explicit InProcLink(ServerCore& core) : core_(core) {}
    void hello(const std::string& session_id, std::uint64_t app_fingerprint) override;
    QEvaluation get_q(const std::string& session_id, const GuiState& state,
                      std::span<const ActionSpec> candidates, FunctionId goal) override;
    std::size_t add_training_data(const EpisodeSequence& seq) override;
    std::shared_ptr<const ModelSnapshot> fetch_model(std::uint64_t have_version) override;

private:
    nlohmann::json roundtrip(nlohmann::json request);
    ServerCore& core_;
    std::uint64_t next_cid_ = 1;
};

/// Framed-socket link with exponential backoff (3 attempts) on transport and
/// backpressure failures.
class SocketLink : public CoordinatorLink {
public:
    SocketLink(const std::string& host, std::uint16_t port);
    void hello(const std::string& session_id, std::uint64_t app_fingerprint) override;
    QEvaluation get_q(const std::string& session_id, const GuiState& state,
                      std::span<const ActionSpec> candidates, FunctionId goal) override;
    std::size_t add_training_data(const EpisodeSequence& seq) override;
    std::shared_ptr<const ModelSnapshot> fetch_model(std::uint64_t have_version) override;

private:
    nlohmann::json roundtrip(nlohmann::json request);
    SocketClient client_;
    std::string host_;
    std::uint16_t port_;
    std::uint64_t next_cid_ = 1;
};

// ---- training sessions -----------------------------------------------------------

struct TrainingSessionConfig {
    std::string session_id = "d0";
    std::uint64_t seed = 0;
    std::uint64_t action_budget = 1000;
    std::size_t refresh_interval = 100; // actions between model refreshes
    std::size_t max_len = 64;
    EpsilonSchedule epsilon;
};

struct TrainingSessionStats {
    std::uint64_t actions = 0;
    std::uint64_t sequences_submitted = 0;
    std::uint64_t goals_triggered = 0;
    std::uint64_t last_model_version = 0;
};

/// One environment action taken by a session, for run event logs.
struct SessionEvent {
    std::string session_id;
    std::uint64_t action_index = 0; // 1-based within the session
    FunctionId goal = 0;
    ActionSpec action;
    std::vector<FunctionId> covered;
    std::string from_screen;
    std::string to_screen;
    bool exited = false;
};

/// One device session against the simulator, driven one action at a time:
/// enumerate, pick with the current epsilon, step, record; submit on seal or
/// goal trigger, then draw a fresh goal and keep going from the current
/// screen. Step-wise driving keeps multi-session training deterministic.
class DeviceSessionLoop {
public:
    using EventFn = std::function<void(const SessionEvent&)>;

    DeviceSessionLoop(const AppModel& model, CoordinatorLink& link, TrainingSessionConfig cfg,
                      std::atomic<std::uint64_t>& global_actions, EventFn on_event = nullptr);

    /// Take one action; false once the budget is exhausted.
    bool step_once();
    /// Submit any partial trailing sequence.
    void flush();

    const TrainingSessionStats& stats() const { return stats_; }

private:
    void submit_current();

    const AppModel& model_;
    CoordinatorLink& link_;
    TrainingSessionConfig cfg_;
    std::atomic<std::uint64_t>& global_actions_;
    EventFn on_event_;
    TrainingSessionStats stats_;
    Rng sel_rng_;
    Rng env_rng_;
    Rng goal_rng_;
    std::vector<FunctionId> all_functions_;
    std::shared_ptr<const ModelSnapshot> snapshot_;
    GuiState state_;
    FunctionId goal_ = 0;
    EpisodeSequence seq_;
    std::uint64_t seq_counter_ = 0;
};

/// Convenience wrapper: drives a DeviceSessionLoop to the end of its budget.
TrainingSessionStats run_training_session(const AppModel& model, CoordinatorLink& link,
                                          const TrainingSessionConfig& cfg,
                                          std::atomic<std::uint64_t>& global_actions);

// ---- guided exploration -----------------------------------------------------------

struct DirectedRunConfig {
    std::vector<FunctionId> targets;
    std::size_t max_directed_steps = 200;
    std::size_t total_event_budget = 1000;
    double epsilon = 0.0;
    // Optional cycle breaker: force one random action after this many
    // consecutive identical state keys. Disabled unless loop_escape is set.
    bool loop_escape = false;
    std::size_t loop_escape_after = 10;

    void validate() const;
};

struct TargetOutcome {
    FunctionId target = 0;
    bool covered = false;
    std::size_t events_used = 0;   // events spent in this target's own pursuit
    bool incidental = false;       // covered outside its own pursuit phase
    long first_covered_event = -1; // 1-based global event index, -1 if never
};

struct DirectedEvent {
    std::size_t global_index = 0; // 1-based
    FunctionId phase_target = 0;
    std::size_t phase_index = 0; // 1-based within the phase
    ActionSpec action;
    std::vector<FunctionId> covered;
    std::string from_screen;
    std::string to_screen;
    bool exited = false;
};

struct DirectedReport {
    std::vector<TargetOutcome> per_target;
    std::size_t total_events = 0;
    std::vector<DirectedEvent> events;
};

/// Walks targets in order, taking argmax-Q actions until the target is
/// covered, its directed-step cap is hit, or the event budget runs out.
/// Coverage of any pending target is credited the moment it happens.
DirectedReport guided_explore(const AppModel& model, const ModelSnapshot& snapshot,
                              const DirectedRunConfig& cfg, std::uint64_t seed);

DirectedReport guided_explore(const AppModel& model, const std::filesystem::path& checkpoint_path,
                              const DirectedRunConfig& cfg, std::uint64_t seed);

/// Round-robin partition of targets across devices, order-preserving.
std::map<std::string, std::vector<FunctionId>> assign_goals(
    const std::vector<std::string>& devices, const std::vector<FunctionId>& targets);

} // namespace guiq
