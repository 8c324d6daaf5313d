#include "coordinator.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <nlohmann/json.hpp>

namespace guiq {

using nlohmann::json;

void EpsilonSchedule::validate() const {
    if (!(0.0 <= eps_end && eps_end <= eps_start && eps_start <= 1.0)) {
        throw Error(Errc::validation, "epsilon schedule requires 0 <= eps_end <= eps_start <= 1");
    }
    if (decay_steps == 0) {
        throw Error(Errc::validation, "epsilon decay_steps must be positive");
    }
}

double EpsilonSchedule::at(std::uint64_t global_actions) const {
    double frac = std::min(1.0, static_cast<double>(global_actions) /
                                    static_cast<double>(decay_steps));
    return eps_start + (eps_end - eps_start) * frac;
}

json epsilon_schedule_to_json(const EpsilonSchedule& s) {
    return json{{"eps_start", s.eps_start}, {"eps_end", s.eps_end}, {"decay_steps", s.decay_steps}};
}

EpsilonSchedule epsilon_schedule_from_json(const json& doc) {
    EpsilonSchedule s;
    s.eps_start = doc.value("eps_start", s.eps_start);
    s.eps_end = doc.value("eps_end", s.eps_end);
    s.decay_steps = doc.value("decay_steps", s.decay_steps);
    s.validate();
    return s;
}

std::shared_ptr<const ModelSnapshot> snapshot_from_checkpoint(const Checkpoint& ckpt,
                                                              bool with_blob) {
    auto snap = std::make_shared<ModelSnapshot>();
    snap->params = ckpt.prediction;
    snap->encoder = ckpt.encoder;
    snap->version = ckpt.meta.model_version;
    if (with_blob) {
        snap->blob = std::make_shared<const std::string>(serialize_checkpoint(ckpt));
    }
    return snap;
}

void ModelHub::publish(std::shared_ptr<const ModelSnapshot> snapshot) {
    std::lock_guard<std::mutex> lock(mutex_);
    latest_ = std::move(snapshot);
}

std::shared_ptr<const ModelSnapshot> ModelHub::latest() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return latest_;
}

QEvaluation evaluate_q(const ModelSnapshot& snapshot, const GuiState& state,
                       std::span<const ActionSpec> candidates, FunctionId goal,
                       const FunctionTable& table) {
    if (candidates.empty()) {
        throw Error(Errc::invalid_arg, "candidate set must not be empty");
    }
    std::vector<double> state_vec = encode_state(snapshot.encoder, state);
    std::vector<double> goal_vec = encode_goal(snapshot.encoder, goal, table);
    QEvaluation eval;
    eval.q_values.reserve(candidates.size());
    for (const ActionSpec& a : candidates) {
        auto input = assemble_input(state_vec, encode_action(snapshot.encoder, a, state.widgets),
                                    goal_vec);
        eval.q_values.push_back(forward(snapshot.params, input));
    }
    eval.chosen = 0;
    for (std::size_t i = 1; i < eval.q_values.size(); ++i) {
        if (eval.q_values[i] > eval.q_values[eval.chosen]) {
            eval.chosen = i;
        }
    }
    return eval;
}

ActionSpec select_action(const ModelSnapshot& snapshot, const GuiState& state,
                         std::span<const ActionSpec> candidates, FunctionId goal,
                         const FunctionTable& table, double eps, Rng& rng) {
    if (candidates.empty()) {
        throw Error(Errc::invalid_arg, "candidate set must not be empty");
    }
    if (rng_unit(rng) < eps) {
        return candidates[rng_below(rng, candidates.size())];
    }
    return candidates[evaluate_q(snapshot, state, candidates, goal, table).chosen];
}

// ---- server -----------------------------------------------------------------

namespace {

json error_response(std::uint64_t cid, std::string_view code, std::string_view message) {
    return json{{"type", "error"},
                {"cid", cid},
                {"code", std::string(code)},
                {"message", std::string(message)}};
}

[[noreturn]] void raise_error_response(const json& resp) {
    std::string code = resp.value("code", std::string("unknown"));
    std::string message = resp.value("message", std::string{});
    throw Error(Errc::protocol, code + ": " + message);
}

} // namespace

ServerCore::ServerCore(std::shared_ptr<const AppModel> model, ModelHub& hub, SequenceQueue& intake)
    : model_(std::move(model)), hub_(hub), intake_(intake) {}

json ServerCore::handle(const json& request) {
    std::uint64_t cid = request.value("cid", std::uint64_t{0});
    try {
        std::string type = request.value("type", std::string{});
        if (type == "hello") return handle_hello(request);
        if (type == "get_q") return handle_get_q(request);
        if (type == "add_training_data") return handle_add_training_data(request);
        if (type == "get_model") return handle_get_model(request);
        return error_response(cid, "malformed", "unknown message type \"" + type + "\"");
    } catch (const Error& e) {
        return error_response(cid, e.code() == Errc::validation ? "invariant_violation" : "error",
                              e.what());
    } catch (const std::exception& e) {
        return error_response(cid, "malformed", e.what());
    }
}

json ServerCore::handle_hello(const json& request) {
    std::uint64_t cid = request.value("cid", std::uint64_t{0});
    std::string session_id = request.at("session_id").get<std::string>();
    std::string fp = request.value("app_fingerprint", std::string{});
    std::string expected = hex64(model_fingerprint(*model_));
    if (!fp.empty() && fp != expected) {
        return error_response(cid, "app_mismatch",
                              "session app fingerprint " + fp + " != server " + expected);
    }
    {
        std::lock_guard<std::mutex> lock(mutex_);
        sessions_.insert(session_id);
    }
    return json{{"type", "ack"}, {"cid", cid}, {"accepted", 0}};
}

json ServerCore::handle_get_q(const json& request) {
    std::uint64_t cid = request.value("cid", std::uint64_t{0});
    std::string session_id = request.value("session", std::string{});
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (sessions_.count(session_id) == 0) {
            return error_response(cid, "unknown_session", "session \"" + session_id +
                                                              "\" has not said hello");
        }
    }
    GuiState state = gui_state_from_json(request.at("state"));
    std::vector<ActionSpec> candidates;
    for (const auto& c : request.at("candidates")) {
        candidates.push_back(action_from_json(c));
    }
    FunctionId goal = request.at("goal").get<FunctionId>();
    auto snapshot = hub_.latest();
    if (!snapshot) {
        return error_response(cid, "no_model", "no model has been published yet");
    }
    QEvaluation eval = evaluate_q(*snapshot, state, candidates, goal, model_->functions);
    return json{{"type", "get_q_resp"},
                {"cid", cid},
                {"q_values", eval.q_values},
                {"chosen", eval.chosen}};
}

json ServerCore::handle_add_training_data(const json& request) {
    std::uint64_t cid = request.value("cid", std::uint64_t{0});
    EpisodeSequence seq = sequence_from_json(request.at("sequence"));
    if (auto broken = find_chain_break(seq)) {
        return error_response(cid, "invariant_violation",
                              "sequence invariant violated at step " + std::to_string(*broken));
    }
    for (std::size_t t = 0; t < seq.steps.size(); ++t) {
        for (FunctionId f : seq.steps[t].covered) {
            if (!model_->functions.contains(f)) {
                return error_response(cid, "invariant_violation",
                                      "sequence step " + std::to_string(t) +
                                          " covers unknown function " + std::to_string(f));
            }
        }
    }
    std::size_t accepted = seq.steps.size();
    if (!intake_.try_push(std::move(seq))) {
        return error_response(cid, "backpressure", "trainer intake queue is full");
    }
    sequences_accepted_.fetch_add(1);
    return json{{"type", "ack"}, {"cid", cid}, {"accepted", accepted}};
}

json ServerCore::handle_get_model(const json& request) {
    std::uint64_t cid = request.value("cid", std::uint64_t{0});
    std::uint64_t have = request.value("have_version", std::uint64_t{0});
    auto snapshot = hub_.latest();
    if (!snapshot) {
        return error_response(cid, "no_model", "no model has been published yet");
    }
    json resp{{"type", "model_blob"}, {"cid", cid}, {"version", snapshot->version}};
    if (snapshot->version <= have || !snapshot->blob) {
        resp["bytes"] = "";
    } else {
        resp["bytes"] = base64_encode(*snapshot->blob);
    }
    return resp;
}

// ---- links -------------------------------------------------------------------

json InProcLink::roundtrip(json request) {
    std::uint64_t cid = next_cid_++;
    request["cid"] = cid;
    json resp = core_.handle(request);
    if (resp.value("cid", std::uint64_t{0}) != cid) {
        throw Error(Errc::protocol, "correlation id mismatch");
    }
    if (resp.value("type", std::string{}) == "error") {
        raise_error_response(resp);
    }
    return resp;
}

void InProcLink::hello(const std::string& session_id, std::uint64_t app_fingerprint) {
    roundtrip(json{{"type", "hello"},
                   {"session_id", session_id},
                   {"app_fingerprint", hex64(app_fingerprint)}});
}

QEvaluation InProcLink::get_q(const std::string& session_id, const GuiState& state,
                              std::span<const ActionSpec> candidates, FunctionId goal) {
    json cands = json::array();
    for (const ActionSpec& a : candidates) {
        cands.push_back(action_to_json(a));
    }
    json resp = roundtrip(json{{"type", "get_q"},
                               {"session", session_id},
                               {"state", gui_state_to_json(state)},
                               {"candidates", cands},
                               {"goal", goal}});
    QEvaluation eval;
    eval.q_values = resp.at("q_values").get<std::vector<double>>();
    eval.chosen = resp.at("chosen").get<std::size_t>();
    return eval;
}

std::size_t InProcLink::add_training_data(const EpisodeSequence& seq) {
    json resp = roundtrip(json{{"type", "add_training_data"}, {"sequence", sequence_to_json(seq)}});
    return resp.at("accepted").get<std::size_t>();
}

std::shared_ptr<const ModelSnapshot> InProcLink::fetch_model(std::uint64_t have_version) {
    json resp = roundtrip(json{{"type", "get_model"}, {"have_version", have_version}});
    std::string bytes = resp.at("bytes").get<std::string>();
    if (bytes.empty()) {
        return nullptr;
    }
    Checkpoint ckpt = deserialize_checkpoint(base64_decode(bytes));
    return snapshot_from_checkpoint(ckpt, false);
}

SocketLink::SocketLink(const std::string& host, std::uint16_t port) : host_(host), port_(port) {
    client_.connect(host_, port_);
}

json SocketLink::roundtrip(json request) {
    std::uint64_t cid = next_cid_++;
    request["cid"] = cid;
    int attempt = 0;
    auto backoff = std::chrono::milliseconds(10);
    while (true) {
        try {
            if (!client_.connected()) {
                client_.connect(host_, port_);
            }
            json resp = client_.request(request);
            if (resp.value("cid", std::uint64_t{0}) != cid) {
                throw Error(Errc::protocol, "correlation id mismatch");
            }
            if (resp.value("type", std::string{}) == "error") {
                if (resp.value("code", std::string{}) == "backpressure" && attempt < 3) {
                    ++attempt;
                    std::this_thread::sleep_for(backoff);
                    backoff *= 2;
                    continue;
                }
                raise_error_response(resp);
            }
            return resp;
        } catch (const Error& e) {
            if (e.code() != Errc::io || attempt >= 3) {
                throw;
            }
            ++attempt;
            client_.close();
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

void SocketLink::hello(const std::string& session_id, std::uint64_t app_fingerprint) {
    roundtrip(json{{"type", "hello"},
                   {"session_id", session_id},
                   {"app_fingerprint", hex64(app_fingerprint)}});
}

QEvaluation SocketLink::get_q(const std::string& session_id, const GuiState& state,
                              std::span<const ActionSpec> candidates, FunctionId goal) {
    json cands = json::array();
    for (const ActionSpec& a : candidates) {
        cands.push_back(action_to_json(a));
    }
    json resp = roundtrip(json{{"type", "get_q"},
                               {"session", session_id},
                               {"state", gui_state_to_json(state)},
                               {"candidates", cands},
                               {"goal", goal}});
    QEvaluation eval;
    eval.q_values = resp.at("q_values").get<std::vector<double>>();
    eval.chosen = resp.at("chosen").get<std::size_t>();
    return eval;
}

std::size_t SocketLink::add_training_data(const EpisodeSequence& seq) {
    json resp = roundtrip(json{{"type", "add_training_data"}, {"sequence", sequence_to_json(seq)}});
    return resp.at("accepted").get<std::size_t>();
}

std::shared_ptr<const ModelSnapshot> SocketLink::fetch_model(std::uint64_t have_version) {
    json resp = roundtrip(json{{"type", "get_model"}, {"have_version", have_version}});
    std::string bytes = resp.at("bytes").get<std::string>();
    if (bytes.empty()) {
        return nullptr;
    }
    Checkpoint ckpt = deserialize_checkpoint(base64_decode(bytes));
    return snapshot_from_checkpoint(ckpt, false);
}

// ---- training session ------------------------------------------------------------

DeviceSessionLoop::DeviceSessionLoop(const AppModel& model, CoordinatorLink& link,
                                     TrainingSessionConfig cfg,
                                     std::atomic<std::uint64_t>& global_actions, EventFn on_event)
    : model_(model),
      link_(link),
      cfg_(std::move(cfg)),
      global_actions_(global_actions),
      on_event_(std::move(on_event)),
      sel_rng_(derive_rng(cfg_.seed, 0x5E1)),
      env_rng_(derive_rng(cfg_.seed, 0xE41)),
      goal_rng_(derive_rng(cfg_.seed, 0x60A1)),
      all_functions_(model.functions.ids()),
      state_(initial_state(model)) {
    cfg_.epsilon.validate();
    if (all_functions_.empty()) {
        throw Error(Errc::invalid_arg, "app model declares no functions to pursue");
    }
    link_.hello(cfg_.session_id, model_fingerprint(model_));
    snapshot_ = link_.fetch_model(0);
    if (!snapshot_) {
        throw Error(Errc::runtime, "no model available for session " + cfg_.session_id);
    }
    stats_.last_model_version = snapshot_->version;
    goal_ = all_functions_[rng_below(goal_rng_, all_functions_.size())];
    seq_.max_len = cfg_.max_len;
    seq_.id = cfg_.session_id + "-" + std::to_string(seq_counter_++);
}

void DeviceSessionLoop::submit_current() {
    if (seq_.steps.empty()) {
        return;
    }
    link_.add_training_data(seq_);
    ++stats_.sequences_submitted;
    seq_ = EpisodeSequence{};
    seq_.max_len = cfg_.max_len;
    seq_.id = cfg_.session_id + "-" + std::to_string(seq_counter_++);
}

bool DeviceSessionLoop::step_once() {
    if (stats_.actions >= cfg_.action_budget) {
        return false;
    }
    std::vector<ActionSpec> candidates = enumerate_actions(model_, state_);
    double eps = cfg_.epsilon.at(global_actions_.fetch_add(1));
    ActionSpec action =
        select_action(*snapshot_, state_, candidates, goal_, model_.functions, eps, sel_rng_);
    StepResult sr = step(model_, state_, action, env_rng_);
    record_step(seq_, state_, action, sr.covered, sr.next);
    ++stats_.actions;
    if (on_event_) {
        SessionEvent ev;
        ev.session_id = cfg_.session_id;
        ev.action_index = stats_.actions;
        ev.goal = goal_;
        ev.action = action;
        ev.covered = sr.covered;
        ev.from_screen = state_.screen_id;
        ev.to_screen = sr.next.screen_id;
        ev.exited = sr.exited;
        on_event_(ev);
    }
    bool triggered = std::binary_search(sr.covered.begin(), sr.covered.end(), goal_);
    if (triggered) {
        ++stats_.goals_triggered;
    }
    if (triggered || seq_.sealed()) {
        submit_current();
        goal_ = all_functions_[rng_below(goal_rng_, all_functions_.size())];
    }
    state_ = std::move(sr.next);
    if (stats_.actions % cfg_.refresh_interval == 0) {
        if (auto fresher = link_.fetch_model(snapshot_->version)) {
            snapshot_ = fresher;
            stats_.last_model_version = snapshot_->version;
        }
    }
    return true;
}

void DeviceSessionLoop::flush() { submit_current(); }

TrainingSessionStats run_training_session(const AppModel& model, CoordinatorLink& link,
                                          const TrainingSessionConfig& cfg,
                                          std::atomic<std::uint64_t>& global_actions) {
    DeviceSessionLoop loop(model, link, cfg, global_actions);
    while (loop.step_once()) {
    }
    loop.flush();
    return loop.stats();
}

// ---- guided exploration ------------------------------------------------------------

void DirectedRunConfig::validate() const {
    if (max_directed_steps == 0 || total_event_budget == 0) {
        throw Error(Errc::validation, "directed run budgets must be positive");
    }
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw Error(Errc::validation, "directed epsilon must lie in [0,1]");
    }
}

DirectedReport guided_explore(const AppModel& model, const ModelSnapshot& snapshot,
                              const DirectedRunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.targets.empty()) {
        throw Error(Errc::invalid_arg, "directed run requires at least one target");
    }
    for (FunctionId t : cfg.targets) {
        if (!model.functions.contains(t)) {
            throw Error(Errc::invalid_arg, "unknown target function " + std::to_string(t));
        }
    }
    if (snapshot.params.input_dim() != static_cast<std::size_t>(snapshot.encoder.input_dim())) {
        throw Error(Errc::validation, "checkpoint does not match its encoder configuration");
    }

    DirectedReport report;
    std::map<FunctionId, std::size_t> slot; // target -> per_target index (first occurrence wins)
    for (FunctionId t : cfg.targets) {
        if (slot.count(t) == 0) {
            slot[t] = report.per_target.size();
            report.per_target.push_back(TargetOutcome{t, false, 0, false, -1});
        }
    }

    Rng sel_rng = derive_rng(seed, 0xD1E5E1);
    Rng env_rng = derive_rng(seed, 0xD1EE41);
    GuiState state = initial_state(model);
    std::size_t global = 0;

    for (FunctionId target : cfg.targets) {
        TargetOutcome& mine = report.per_target[slot[target]];
        if (mine.covered) {
            continue; // covered incidentally before its phase began
        }
        std::size_t phase_events = 0;
        StateKey last_key = state_key(state);
        std::size_t repeat_count = 1;
        while (!mine.covered && phase_events < cfg.max_directed_steps &&
               global < cfg.total_event_budget) {
            std::vector<ActionSpec> candidates = enumerate_actions(model, state);
            ActionSpec action;
            if (cfg.loop_escape && repeat_count >= cfg.loop_escape_after) {
                action = candidates[rng_below(sel_rng, candidates.size())];
                repeat_count = 1;
            } else {
                action = select_action(snapshot, state, candidates, target, model.functions,
                                       cfg.epsilon, sel_rng);
            }
            StepResult sr = step(model, state, action, env_rng);
            ++global;
            ++phase_events;
            mine.events_used = phase_events;

            DirectedEvent ev;
            ev.global_index = global;
            ev.phase_target = target;
            ev.phase_index = phase_events;
            ev.action = action;
            ev.covered = sr.covered;
            ev.from_screen = state.screen_id;
            ev.to_screen = sr.next.screen_id;
            ev.exited = sr.exited;
            report.events.push_back(std::move(ev));

            for (FunctionId f : sr.covered) {
                auto it = slot.find(f);
                if (it == slot.end()) continue;
                TargetOutcome& out = report.per_target[it->second];
                if (out.covered) continue;
                out.covered = true;
                out.first_covered_event = static_cast<long>(global);
                out.incidental = (f != target);
            }

            StateKey key = state_key(sr.next);
            repeat_count = (key == last_key) ? repeat_count + 1 : 1;
            last_key = key;
            state = std::move(sr.next);
        }
        if (global >= cfg.total_event_budget) {
            // Budget exhausted: remaining targets keep whatever they accrued.
            if (!mine.covered && phase_events == 0) continue;
        }
    }
    report.total_events = global;
    return report;
}

DirectedReport guided_explore(const AppModel& model, const std::filesystem::path& checkpoint_path,
                              const DirectedRunConfig& cfg, std::uint64_t seed) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    auto snapshot = snapshot_from_checkpoint(ckpt, false);
    return guided_explore(model, *snapshot, cfg, seed);
}

std::map<std::string, std::vector<FunctionId>> assign_goals(
    const std::vector<std::string>& devices, const std::vector<FunctionId>& targets) {
    if (devices.empty()) {
        throw Error(Errc::invalid_arg, "assign_goals requires at least one device");
    }
    std::map<std::string, std::vector<FunctionId>> out;
    for (const std::string& d : devices) {
        out[d];
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        out[devices[i % devices.size()]].push_back(targets[i]);
    }
    return out;
}

} // namespace guiq
