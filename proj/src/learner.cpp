#include "learner.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace guiq {

using nlohmann::json;

const GuiState& EpisodeSequence::next_state_of(std::size_t t) const {
    if (t + 1 < steps.size()) {
        return *steps[t + 1].state;
    }
    if (!terminal) {
        throw Error(Errc::runtime, "sequence has no terminal state");
    }
    return *terminal;
}

RecordResult record_step(EpisodeSequence& seq, const GuiState& state, const ActionSpec& action,
                         const std::vector<FunctionId>& covered, const GuiState& next_state) {
    if (seq.sealed()) {
        throw Error(Errc::runtime, "cannot append to a sealed sequence");
    }
    StateKey key = state_key(state);
    if (!seq.steps.empty() && seq.steps.back().next_key != key) {
        throw Error(Errc::runtime, "sequence chain break: state does not follow the previous step");
    }
    EpisodeStep step;
    step.state = std::make_shared<GuiState>(state);
    step.key = key;
    step.action = action;
    step.covered = covered;
    std::sort(step.covered.begin(), step.covered.end());
    step.covered.erase(std::unique(step.covered.begin(), step.covered.end()), step.covered.end());
    step.next_key = state_key(next_state);
    seq.steps.push_back(std::move(step));
    seq.terminal = std::make_shared<GuiState>(next_state);
    return seq.sealed() ? RecordResult::sealed : RecordResult::ok;
}

json sequence_to_json(const EpisodeSequence& seq) {
    json steps = json::array();
    for (const EpisodeStep& s : seq.steps) {
        steps.push_back(json{{"state", gui_state_to_json(*s.state)},
                             {"action", action_to_json(s.action)},
                             {"covered", s.covered}});
    }
    json doc{{"id", seq.id}, {"max_len", seq.max_len}, {"steps", steps}};
    if (seq.terminal) {
        doc["terminal"] = gui_state_to_json(*seq.terminal);
    }
    return doc;
}

EpisodeSequence sequence_from_json(const json& doc) {
    EpisodeSequence seq;
    seq.id = doc.value("id", std::string{});
    seq.max_len = doc.value("max_len", std::size_t{64});
    std::vector<std::shared_ptr<const GuiState>> states;
    for (const auto& s : doc.at("steps")) {
        EpisodeStep step;
        step.state = std::make_shared<GuiState>(gui_state_from_json(s.at("state")));
        step.key = state_key(*step.state);
        step.action = action_from_json(s.at("action"));
        for (const auto& f : s.at("covered")) {
            step.covered.push_back(f.get<FunctionId>());
        }
        std::sort(step.covered.begin(), step.covered.end());
        seq.steps.push_back(std::move(step));
    }
    if (doc.contains("terminal")) {
        seq.terminal = std::make_shared<GuiState>(gui_state_from_json(doc.at("terminal")));
    }
    // next_key fields are derived, not trusted from the wire
    for (std::size_t t = 0; t < seq.steps.size(); ++t) {
        const GuiState* next = nullptr;
        if (t + 1 < seq.steps.size()) {
            next = seq.steps[t + 1].state.get();
        } else if (seq.terminal) {
            next = seq.terminal.get();
        }
        if (next) {
            seq.steps[t].next_key = state_key(*next);
        }
    }
    return seq;
}

std::optional<std::size_t> find_chain_break(const EpisodeSequence& seq) {
    if (seq.steps.size() > seq.max_len) {
        return 0;
    }
    if (!seq.steps.empty() && !seq.terminal) {
        return seq.steps.size() - 1;
    }
    for (std::size_t t = 0; t + 1 < seq.steps.size(); ++t) {
        if (seq.steps[t].next_key != seq.steps[t + 1].key) {
            return t + 1;
        }
    }
    return std::nullopt;
}

RewardResult compute_reward(const EpisodeSequence& seq, std::size_t t, FunctionId g,
                            double gamma) {
    if (t >= seq.steps.size()) {
        throw Error(Errc::invalid_arg, "step index out of range");
    }
    if (gamma <= 0.0 || gamma >= 1.0) {
        throw Error(Errc::invalid_arg, "gamma must lie in (0,1)");
    }
    const EpisodeStep& step = seq.steps[t];
    if (std::binary_search(step.covered.begin(), step.covered.end(), g)) {
        return RewardResult{1.0, true};
    }
    if (step.key == step.next_key) {
        return RewardResult{-0.001, false};
    }
    for (std::size_t n = 1; t + n < seq.steps.size(); ++n) {
        const auto& future = seq.steps[t + n].covered;
        if (std::binary_search(future.begin(), future.end(), g)) {
            // gamma^n by iterated product so tests can reproduce it bit-exactly
            double r = 0.01;
            for (std::size_t i = 0; i < n; ++i) {
                r *= gamma;
            }
            return RewardResult{r, false};
        }
    }
    return RewardResult{-0.0001, false};
}

void TrainerConfig::validate() const {
    if (gamma <= 0.0 || gamma >= 1.0) {
        throw Error(Errc::validation, "gamma must lie in (0,1)");
    }
    if (relabel_k < 1 || max_len < 1 || batch_size < 1 || target_sync_interval < 1 ||
        buffer_capacity < 1 || min_buffer_fill < 1 || publish_interval < 1) {
        throw Error(Errc::validation, "trainer config values must be positive");
    }
}

json trainer_config_to_json(const TrainerConfig& cfg) {
    return json{{"gamma", cfg.gamma},
                {"relabel_k", cfg.relabel_k},
                {"max_len", cfg.max_len},
                {"batch_size", cfg.batch_size},
                {"target_sync_interval", cfg.target_sync_interval},
                {"buffer_capacity", cfg.buffer_capacity},
                {"min_buffer_fill", cfg.min_buffer_fill},
                {"publish_interval", cfg.publish_interval}};
}

TrainerConfig trainer_config_from_json(const json& doc) {
    TrainerConfig cfg;
    cfg.gamma = doc.value("gamma", cfg.gamma);
    cfg.relabel_k = doc.value("relabel_k", cfg.relabel_k);
    cfg.max_len = doc.value("max_len", cfg.max_len);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.target_sync_interval = doc.value("target_sync_interval", cfg.target_sync_interval);
    cfg.buffer_capacity = doc.value("buffer_capacity", cfg.buffer_capacity);
    cfg.min_buffer_fill = doc.value("min_buffer_fill", cfg.min_buffer_fill);
    cfg.publish_interval = doc.value("publish_interval", cfg.publish_interval);
    cfg.validate();
    return cfg;
}

std::vector<TrainingTuple> relabel(const EpisodeSequence& seq, const TrainerConfig& cfg,
                                   Rng& rng) {
    std::vector<TrainingTuple> out;
    const std::size_t len = seq.steps.size();
    if (len == 0) {
        return out;
    }
    // future_union[t] = sorted distinct ids in F_t u F_{t+1} u ... u F_last
    std::vector<std::vector<FunctionId>> future_union(len);
    std::vector<FunctionId> acc;
    for (std::size_t t = len; t-- > 0;) {
        for (FunctionId f : seq.steps[t].covered) {
            acc.push_back(f);
        }
        std::sort(acc.begin(), acc.end());
        acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
        future_union[t] = acc;
    }
    for (std::size_t t = 0; t < len; ++t) {
        const auto& support = future_union[t];
        if (support.empty()) {
            continue; // no valid goal exists for this step
        }
        const EpisodeStep& step = seq.steps[t];
        auto next_state = (t + 1 < len) ? seq.steps[t + 1].state : seq.terminal;
        std::vector<ActionSpec> next_candidates = enumerate_actions(*next_state);
        for (int k = 0; k < cfg.relabel_k; ++k) {
            FunctionId g = support[rng_below(rng, support.size())];
            RewardResult rr = compute_reward(seq, t, g, cfg.gamma);
            TrainingTuple tuple;
            tuple.goal = g;
            tuple.state = step.state;
            tuple.action = step.action;
            tuple.reward = rr.reward;
            tuple.done = rr.done;
            tuple.next_state = next_state;
            tuple.next_candidates = next_candidates;
            tuple.sequence_id = seq.id;
            out.push_back(std::move(tuple));
        }
    }
    return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) {
        throw Error(Errc::invalid_arg, "replay buffer capacity must be positive");
    }
}

void ReplayBuffer::push(TrainingTuple tuple) {
    ++pushes_;
    if (items_.size() < capacity_) {
        items_.push_back(std::move(tuple));
        return;
    }
    items_[head_] = std::move(tuple); // overwrite the oldest item
    head_ = (head_ + 1) % capacity_;
    ++evictions_;
}

std::vector<const TrainingTuple*> ReplayBuffer::sample(std::size_t batch_size,
                                                       std::size_t min_fill, Rng& rng) const {
    if (items_.size() < min_fill) {
        throw Error(Errc::runtime, "replay buffer below minimum fill (" +
                                       std::to_string(items_.size()) + " < " +
                                       std::to_string(min_fill) + ")");
    }
    std::vector<const TrainingTuple*> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        out.push_back(&items_[rng_below(rng, items_.size())]);
    }
    return out;
}

bool SequenceQueue::try_push(EpisodeSequence seq) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (items_.size() >= capacity_) {
        return false;
    }
    items_.push_back(std::move(seq));
    return true;
}

std::optional<EpisodeSequence> SequenceQueue::try_pop() {
    std::lock_guard<std::mutex> lock(mutex_);
    if (items_.empty()) {
        return std::nullopt;
    }
    EpisodeSequence seq = std::move(items_.front());
    items_.pop_front();
    return seq;
}

std::size_t SequenceQueue::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return items_.size();
}

Trainer::Trainer(TrainerConfig cfg, EncoderConfig encoder, std::vector<std::size_t> hidden_sizes,
                 FunctionTable functions, std::uint64_t seed, std::uint64_t app_fingerprint)
    : cfg_(cfg),
      functions_(std::move(functions)),
      buffer_(cfg.buffer_capacity),
      rng_(derive_rng(seed, 0x7261696E)) {
    cfg_.validate();
    encoder.validate();
    std::vector<std::size_t> sizes;
    sizes.push_back(static_cast<std::size_t>(encoder.input_dim()));
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(1);
    ckpt_.prediction = init_params(sizes, mix64(seed));
    ckpt_.target = ckpt_.prediction;
    ckpt_.adam = init_adam(ckpt_.prediction);
    ckpt_.encoder = encoder;
    ckpt_.meta.app_fingerprint = app_fingerprint;
}

std::size_t Trainer::submit(const EpisodeSequence& seq) {
    auto tuples = relabel(seq, cfg_, rng_);
    for (const EpisodeStep& step : seq.steps) {
        for (FunctionId f : step.covered) {
            ++heat_[f];
        }
    }
    processed_ids_.push_back(seq.id);
    for (TrainingTuple& t : tuples) {
        buffer_.push(std::move(t));
        ++tuples_ingested_;
    }
    return tuples.size();
}

std::size_t Trainer::drain(SequenceQueue& queue) {
    std::size_t n = 0;
    while (auto seq = queue.try_pop()) {
        submit(*seq);
        ++n;
    }
    return n;
}

Batch Trainer::build_batch(const std::vector<const TrainingTuple*>& tuples) {
    Batch batch;
    batch.inputs.reserve(tuples.size());
    batch.td_targets.reserve(tuples.size());
    for (const TrainingTuple* t : tuples) {
        auto goal_it = goal_vec_cache_.find(t->goal);
        if (goal_it == goal_vec_cache_.end()) {
            goal_it = goal_vec_cache_
                          .emplace(t->goal, encode_goal(ckpt_.encoder, t->goal, functions_))
                          .first;
        }
        const std::vector<double>& goal_vec = goal_it->second;

        double target_value = t->reward;
        if (!t->done) {
            std::vector<double> next_state_vec = encode_state(ckpt_.encoder, *t->next_state);
            std::vector<std::vector<double>> candidates;
            candidates.reserve(t->next_candidates.size());
            for (const ActionSpec& a : t->next_candidates) {
                candidates.push_back(assemble_input(
                    next_state_vec, encode_action(ckpt_.encoder, a, t->next_state->widgets),
                    goal_vec));
            }
            target_value = td_target(t->reward, t->done, cfg_.gamma, candidates, ckpt_.prediction,
                                     ckpt_.target);
        }
        batch.inputs.push_back(assemble_input(
            encode_state(ckpt_.encoder, *t->state),
            encode_action(ckpt_.encoder, t->action, t->state->widgets), goal_vec));
        batch.td_targets.push_back(target_value);
    }
    return batch;
}

TrainerMetricsRow Trainer::train_step() {
    auto tuples = buffer_.sample(cfg_.batch_size, cfg_.min_buffer_fill, rng_);
    Batch batch = build_batch(tuples);
    LossGrads lg = loss_and_grads(ckpt_.prediction, batch);
    adam_step(ckpt_.prediction, ckpt_.adam, lg.grads);
    ++steps_;
    if (steps_ % cfg_.target_sync_interval == 0) {
        sync_target(ckpt_.prediction, ckpt_.target);
        ++target_syncs_;
    }
    if (publish_ && steps_ % cfg_.publish_interval == 0) {
        publish_now();
    }
    return TrainerMetricsRow{steps_, lg.loss, buffer_.size(), ckpt_.meta.model_version};
}

void Trainer::publish_now() {
    if (!publish_) {
        return;
    }
    int attempts = 0;
    while (true) {
        try {
            publish_(ckpt_);
            return;
        } catch (const std::exception& e) {
            if (++attempts >= 3) {
                throw Error(Errc::io,
                            std::string("checkpoint publish failed after 3 attempts: ") + e.what());
            }
        }
    }
}

} // namespace guiq
