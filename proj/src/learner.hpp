#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include <nlohmann/json_fwd.hpp>

#include "qnet.hpp"

namespace guiq {

struct EpisodeStep {
    std::shared_ptr<const GuiState> state;
    StateKey key;
    ActionSpec action;
    std::vector<FunctionId> covered; // F_t, sorted
    StateKey next_key;
};

/// Recorded exploration episode `<s0,a0,F0, s1,a1,F1, ..., s_{t+1}>` with a
/// hard length cap N; consecutive steps must chain by state key.
struct EpisodeSequence {
    std::string id;
    std::size_t max_len = 64;
    std::vector<EpisodeStep> steps;
    std::shared_ptr<const GuiState> terminal; // s_{t+1} of the last step

    bool sealed() const { return steps.size() >= max_len; }
    const GuiState& next_state_of(std::size_t t) const;
};

enum class RecordResult { ok, sealed };

/// Appends one step; returns sealed when the append fills the sequence to N.
/// Appending to a sealed sequence or breaking the key chain throws.
RecordResult record_step(EpisodeSequence& seq, const GuiState& state, const ActionSpec& action,
                         const std::vector<FunctionId>& covered, const GuiState& next_state);

nlohmann::json sequence_to_json(const EpisodeSequence& seq);
EpisodeSequence sequence_from_json(const nlohmann::json& doc);

/// Structural checks on a received sequence (length cap, key chain). Returns
/// the index of the first broken step, or nullopt when well-formed.
std::optional<std::size_t> find_chain_break(const EpisodeSequence& seq);

struct RewardResult {
    double reward = 0.0;
    bool done = false;
};

/// Four-case shaped reward for pursuing goal `g` at step `t`, evaluated in
/// strict priority order:
///   1. g in F_t                         -> (1, done)
///   2. screen key unchanged             -> (-0.001, not done)
///   3. g in F_{t+n}, minimal n >= 1     -> (0.01 * gamma^n, not done)
///   4. otherwise                        -> (-0.0001, not done)
RewardResult compute_reward(const EpisodeSequence& seq, std::size_t t, FunctionId g, double gamma);

struct TrainerConfig {
    double gamma = 0.99;
    int relabel_k = 4;
    std::size_t max_len = 64;
    std::size_t batch_size = 64;
    std::size_t target_sync_interval = 500;
    std::size_t buffer_capacity = 200000;
    std::size_t min_buffer_fill = 1000;
    std::size_t publish_interval = 200;

    void validate() const;
};

nlohmann::json trainer_config_to_json(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_json(const nlohmann::json& doc);

/// One replay item: (g, s, a, r, s', d) plus the next state's candidate
/// actions, captured at relabel time for the Double-DQN argmax.
struct TrainingTuple {
    FunctionId goal = 0;
    std::shared_ptr<const GuiState> state;
    ActionSpec action;
    double reward = 0.0;
    bool done = false;
    std::shared_ptr<const GuiState> next_state;
    std::vector<ActionSpec> next_candidates;
    std::string sequence_id;
};

/// K-fold hindsight relabeling: per step, K goals drawn uniformly from the
/// union of functions covered at or after that step (steps with an empty
/// union are skipped).
std::vector<TrainingTuple> relabel(const EpisodeSequence& seq, const TrainerConfig& cfg, Rng& rng);

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(TrainingTuple tuple);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t total_pushes() const { return pushes_; }
    std::uint64_t total_evictions() const { return evictions_; }

    /// Uniform with replacement; requires size() >= min_fill.
    std::vector<const TrainingTuple*> sample(std::size_t batch_size, std::size_t min_fill,
                                             Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0; // next slot to overwrite once full
    std::vector<TrainingTuple> items_;
    std::uint64_t pushes_ = 0;
    std::uint64_t evictions_ = 0;
};

/// Bounded MPSC queue carrying sealed sequences from sessions to the trainer.
class SequenceQueue {
public:
    explicit SequenceQueue(std::size_t capacity = 256) : capacity_(capacity) {}

    bool try_push(EpisodeSequence seq); // false = full (backpressure)
    std::optional<EpisodeSequence> try_pop();
    std::size_t size() const;

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::deque<EpisodeSequence> items_;
};

struct TrainerMetricsRow {
    std::uint64_t step = 0;
    double loss = 0.0;
    std::size_t buffer_size = 0;
    std::uint64_t model_version = 0;
};

/// Single-consumer training loop core. Owns the nets, optimizer state, replay
/// buffer and heat tally; callers drive it either synchronously (drain/step)
/// or through run() with a stop flag.
class Trainer {
public:
    Trainer(TrainerConfig cfg, EncoderConfig encoder, std::vector<std::size_t> hidden_sizes,
            FunctionTable functions, std::uint64_t seed, std::uint64_t app_fingerprint = 0);

    /// Relabel and push one sealed/submitted sequence.
    std::size_t submit(const EpisodeSequence& seq);
    /// Drain everything currently in the queue; returns sequences consumed.
    std::size_t drain(SequenceQueue& queue);

    bool ready() const { return buffer_.size() >= cfg_.min_buffer_fill; }
    /// One optimizer step (sample batch, Double-DQN targets, Adam update).
    TrainerMetricsRow train_step();

    /// Periodic checkpoint + snapshot publication; invoked by train_step at the
    /// publish interval, or manually for a final save. Write failures are
    /// retried, then surfaced after 3 attempts.
    using PublishFn = std::function<void(Checkpoint&)>;
    void set_publish_fn(PublishFn fn) { publish_ = std::move(fn); }
    void publish_now();

    const TrainerConfig& config() const { return cfg_; }
    const Checkpoint& checkpoint() const { return ckpt_; }
    std::uint64_t steps_done() const { return steps_; }
    std::uint64_t target_syncs() const { return target_syncs_; }
    std::size_t buffer_size() const { return buffer_.size(); }
    std::uint64_t tuples_ingested() const { return tuples_ingested_; }
    const std::map<FunctionId, std::uint64_t>& heat() const { return heat_; }
    const std::vector<std::string>& processed_sequence_ids() const { return processed_ids_; }

private:
    Batch build_batch(const std::vector<const TrainingTuple*>& tuples);

    TrainerConfig cfg_;
    FunctionTable functions_;
    Checkpoint ckpt_;
    ReplayBuffer buffer_;
    Rng rng_;
    std::uint64_t steps_ = 0;
    std::uint64_t target_syncs_ = 0;
    std::uint64_t tuples_ingested_ = 0;
    std::map<FunctionId, std::uint64_t> heat_;
    std::vector<std::string> processed_ids_;
    std::map<FunctionId, std::vector<double>> goal_vec_cache_;
    PublishFn publish_;
};

} // namespace guiq
