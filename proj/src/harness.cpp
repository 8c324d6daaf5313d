#include "harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace guiq {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_io("cannot open " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

json read_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw_parse("invalid JSON in " + path.string() + ": " + e.what());
    }
}

std::string target_mode_name(TargetMode mode) {
    switch (mode) {
        case TargetMode::random_k: return "random_k";
        case TargetMode::changed_set: return "changed_set";
        case TargetMode::listener_like: return "listener_like";
    }
    return "random_k";
}

TargetMode target_mode_from_name(const std::string& name) {
    if (name == "random_k") return TargetMode::random_k;
    if (name == "changed_set") return TargetMode::changed_set;
    if (name == "listener_like") return TargetMode::listener_like;
    throw Error(Errc::validation, "unknown target mode \"" + name + "\"");
}

json directed_event_to_json(const DirectedEvent& ev, bool random_policy) {
    json row{{"i", ev.global_index},
             {"action", action_to_json(ev.action)},
             {"covered", ev.covered},
             {"from", ev.from_screen},
             {"to", ev.to_screen},
             {"exited", ev.exited}};
    if (random_policy) {
        row["phase_target"] = nullptr;
        row["phase_i"] = ev.global_index;
    } else {
        row["phase_target"] = ev.phase_target;
        row["phase_i"] = ev.phase_index;
    }
    return row;
}

} // namespace

void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw_io("cannot write " + path.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw_io("write failed: " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

// ---- spec json -----------------------------------------------------------------

ExperimentSpec experiment_spec_from_json(const json& doc) {
    ExperimentSpec spec;
    if (doc.contains("app")) {
        const json& app = doc.at("app");
        if (app.contains("path")) {
            spec.app_path = app.at("path").get<std::string>();
        }
        if (app.contains("generator")) {
            spec.generator = generator_spec_from_json(app.at("generator"));
        }
    }
    spec.policy = doc.value("policy", spec.policy);
    if (spec.policy != "guided" && spec.policy != "random") {
        throw Error(Errc::validation, "policy must be \"guided\" or \"random\"");
    }
    if (doc.contains("seeds")) {
        spec.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    }
    if (spec.seeds.empty()) {
        throw Error(Errc::validation, "seeds must be non-empty");
    }
    spec.budget_events = doc.value("budget_events", spec.budget_events);
    spec.max_directed_steps = doc.value("max_directed_steps", spec.max_directed_steps);
    spec.directed_epsilon = doc.value("directed_epsilon", spec.directed_epsilon);
    if (doc.contains("targets")) {
        const json& t = doc.at("targets");
        spec.targets.mode = target_mode_from_name(t.value("mode", std::string("random_k")));
        spec.targets.k = t.value("k", spec.targets.k);
        spec.targets.set_name = t.value("name", std::string{});
    }
    if (doc.contains("train")) {
        const json& t = doc.at("train");
        spec.train.seed = t.value("seed", spec.train.seed);
        spec.train.trainer_steps = t.value("trainer_steps", spec.train.trainer_steps);
        spec.train.session_actions = t.value("session_actions", spec.train.session_actions);
        spec.train.sessions = t.value("sessions", spec.train.sessions);
        spec.train.refresh_interval = t.value("refresh_interval", spec.train.refresh_interval);
        spec.train.metrics_every = t.value("metrics_every", spec.train.metrics_every);
        if (t.contains("net_hidden")) {
            spec.train.net_hidden = t.at("net_hidden").get<std::vector<std::size_t>>();
        }
        if (t.contains("trainer")) {
            spec.train.trainer = trainer_config_from_json(t.at("trainer"));
        }
        if (t.contains("encoder")) {
            spec.train.encoder = encoder_config_from_json(t.at("encoder"));
        }
        if (t.contains("epsilon")) {
            spec.train.epsilon = epsilon_schedule_from_json(t.at("epsilon"));
        }
    }
    if (spec.train.sessions < 1) {
        throw Error(Errc::validation, "train.sessions must be >= 1");
    }
    return spec;
}

json experiment_spec_to_json(const ExperimentSpec& spec) {
    json app = json::object();
    if (!spec.app_path.empty()) {
        app["path"] = spec.app_path;
    }
    if (spec.generator) {
        app["generator"] = generator_spec_to_json(*spec.generator);
    }
    return json{{"app", app},
                {"policy", spec.policy},
                {"seeds", spec.seeds},
                {"budget_events", spec.budget_events},
                {"max_directed_steps", spec.max_directed_steps},
                {"directed_epsilon", spec.directed_epsilon},
                {"targets",
                 {{"mode", target_mode_name(spec.targets.mode)},
                  {"k", spec.targets.k},
                  {"name", spec.targets.set_name}}},
                {"train",
                 {{"seed", spec.train.seed},
                  {"trainer_steps", spec.train.trainer_steps},
                  {"session_actions", spec.train.session_actions},
                  {"sessions", spec.train.sessions},
                  {"refresh_interval", spec.train.refresh_interval},
                  {"metrics_every", spec.train.metrics_every},
                  {"net_hidden", spec.train.net_hidden},
                  {"trainer", trainer_config_to_json(spec.train.trainer)},
                  {"encoder", encoder_config_to_json(spec.train.encoder)},
                  {"epsilon", epsilon_schedule_to_json(spec.train.epsilon)}}}};
}

AppModel resolve_app(const ExperimentSpec& spec) {
    if (!spec.app_path.empty() && spec.generator) {
        throw Error(Errc::validation, "specify either an app path or a generator, not both");
    }
    if (!spec.app_path.empty()) {
        return load_app_model(spec.app_path);
    }
    if (spec.generator) {
        return generate_synthetic_app(*spec.generator);
    }
    throw Error(Errc::validation, "experiment spec names no app model");
}

std::vector<FunctionId> sample_targets(const TargetSelection& sel, const AppModel& model,
                                       std::uint64_t seed) {
    auto pick_k = [&](std::vector<FunctionId> pool, std::size_t k) {
        Rng rng = derive_rng(mix64(seed) ^ model_fingerprint(model), 0x7A46E7);
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + rng_below(rng, pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    };
    switch (sel.mode) {
        case TargetMode::random_k: {
            std::vector<FunctionId> ids = model.functions.ids();
            if (sel.k > ids.size()) {
                throw Error(Errc::validation,
                            "target k exceeds the model's function count");
            }
            return pick_k(std::move(ids), sel.k);
        }
        case TargetMode::changed_set: {
            auto it = model.functions.changed_sets.find(sel.set_name);
            if (it == model.functions.changed_sets.end()) {
                throw Error(Errc::validation, "unknown changed set \"" + sel.set_name + "\"");
            }
            return it->second;
        }
        case TargetMode::listener_like: {
            std::vector<FunctionId> pool;
            for (const auto& [id, sig] : model.functions.entries) {
                std::size_t dot = sig.rfind('.');
                std::string_view last =
                    dot == std::string::npos ? std::string_view(sig)
                                             : std::string_view(sig).substr(dot + 1);
                if (last.size() >= 2 && last[0] == 'o' && last[1] == 'n') {
                    pool.push_back(id);
                }
            }
            if (pool.empty()) {
                throw Error(Errc::validation, "model has no listener-like functions");
            }
            return pick_k(std::move(pool), std::min(sel.k, pool.size()));
        }
    }
    throw Error(Errc::runtime, "unreachable");
}

// ---- manifests --------------------------------------------------------------------

namespace {

json build_manifest(const std::string& command, const ExperimentSpec& spec, const AppModel& model,
                    const std::optional<std::filesystem::path>& checkpoint,
                    const std::string& primary_output, std::vector<std::string> files) {
    ExperimentSpec resolved = spec;
    if (!resolved.app_path.empty()) {
        resolved.app_path = std::filesystem::absolute(resolved.app_path).string();
    }
    json m{{"command", command},
           {"spec", experiment_spec_to_json(resolved)},
           {"app", {{"name", model.name}, {"fingerprint", hex64(model_fingerprint(model))}}},
           {"outputs", {{"primary", primary_output}, {"files", files}}}};
    if (checkpoint) {
        m["checkpoint"] = {{"path", std::filesystem::absolute(*checkpoint).string()},
                           {"fingerprint", hex64(checkpoint_fingerprint(*checkpoint))}};
    }
    m["run_id"] = hex64(hash64(m.dump()));
    return m;
}

void write_manifest(const json& manifest, const std::filesystem::path& out_dir) {
    atomic_write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace

// ---- train ---------------------------------------------------------------------------

TrainOutputs cmd_train(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto model = std::make_shared<const AppModel>(resolve_app(spec));
    const TrainSpec& ts = spec.train;
    const std::uint64_t fp = model_fingerprint(*model);

    Trainer trainer(ts.trainer, ts.encoder, ts.net_hidden, model->functions, ts.seed, fp);
    ModelHub hub;
    SequenceQueue queue(1024);
    ServerCore core(model, hub, queue);

    TrainOutputs outputs;
    outputs.manifest = out_dir / "manifest.json";
    outputs.metrics_csv = out_dir / "metrics.csv";
    outputs.heat_csv = out_dir / "heat.csv";
    outputs.events_jsonl = out_dir / "train_events.jsonl";
    const std::filesystem::path ckpt_path = out_dir / "checkpoint.bin";

    bool checkpoint_written = false;
    trainer.set_publish_fn([&](Checkpoint& ckpt) {
        save_checkpoint(ckpt, ckpt_path);
        hub.publish(snapshot_from_checkpoint(ckpt, true));
        checkpoint_written = true;
    });
    hub.publish(snapshot_from_checkpoint(trainer.checkpoint(), true));

    std::string events_log;
    std::uint64_t event_counter = 0;
    auto log_event = [&](const SessionEvent& ev) {
        json row{{"i", ++event_counter},  {"session", ev.session_id},
                 {"goal", ev.goal},       {"action", action_to_json(ev.action)},
                 {"covered", ev.covered}, {"from", ev.from_screen},
                 {"to", ev.to_screen},    {"exited", ev.exited}};
        events_log += row.dump();
        events_log += '\n';
    };

    std::atomic<std::uint64_t> global_actions{0};
    std::vector<std::unique_ptr<InProcLink>> links;
    std::vector<std::unique_ptr<DeviceSessionLoop>> sessions;
    for (std::size_t i = 0; i < ts.sessions; ++i) {
        TrainingSessionConfig cfg;
        cfg.session_id = "d" + std::to_string(i);
        cfg.seed = mix64(ts.seed) ^ mix64(0x5E55 + i);
        cfg.action_budget = ts.session_actions;
        cfg.refresh_interval = ts.refresh_interval;
        cfg.max_len = ts.trainer.max_len;
        cfg.epsilon = ts.epsilon;
        links.push_back(std::make_unique<InProcLink>(core));
        sessions.push_back(std::make_unique<DeviceSessionLoop>(*model, *links.back(), cfg,
                                                               global_actions, log_event));
    }

    std::string metrics = "step,loss,buffer_size,model_version\n";
    while (trainer.steps_done() < ts.trainer_steps) {
        bool any_action = false;
        for (auto& session : sessions) {
            any_action = session->step_once() || any_action;
        }
        trainer.drain(queue);
        if (trainer.ready()) {
            TrainerMetricsRow row = trainer.train_step();
            if (row.step % ts.metrics_every == 0) {
                metrics += std::to_string(row.step) + "," + fmt_double(row.loss) + "," +
                           std::to_string(row.buffer_size) + "," +
                           std::to_string(row.model_version) + "\n";
            }
        } else if (!any_action) {
            break; // sessions exhausted before the buffer ever filled
        }
    }
    for (auto& session : sessions) {
        session->flush();
    }
    trainer.drain(queue);
    if (trainer.steps_done() > 0) {
        trainer.publish_now();
    }

    atomic_write_file(outputs.metrics_csv, metrics);
    std::string heat = "function_id,count\n";
    for (const auto& [id, count] : trainer.heat()) {
        heat += std::to_string(id) + "," + std::to_string(count) + "\n";
    }
    atomic_write_file(outputs.heat_csv, heat);
    atomic_write_file(outputs.events_jsonl, events_log);

    outputs.trainer_steps = trainer.steps_done();
    if (checkpoint_written) {
        outputs.checkpoint = ckpt_path;
    }
    write_manifest(build_manifest("train", spec, *model,
                                  checkpoint_written ? std::optional(ckpt_path) : std::nullopt,
                                  "metrics.csv",
                                  {"metrics.csv", "heat.csv", "train_events.jsonl"}),
                   out_dir);
    return outputs;
}

// ---- evaluate / baseline ----------------------------------------------------------------

namespace {

struct WalkOutcome {
    std::vector<TargetOutcome> per_target;
    std::size_t total_events = 0;
    std::vector<DirectedEvent> events;
};

WalkOutcome random_walk(const AppModel& model, const std::vector<FunctionId>& targets,
                        std::size_t budget, std::uint64_t seed) {
    WalkOutcome out;
    std::map<FunctionId, std::size_t> slot;
    for (FunctionId t : targets) {
        if (slot.count(t) == 0) {
            slot[t] = out.per_target.size();
            out.per_target.push_back(TargetOutcome{t, false, 0, false, -1});
        }
    }
    Rng act_rng = derive_rng(seed, 0xBA5E);
    Rng env_rng = derive_rng(seed, 0xBA5F);
    GuiState state = initial_state(model);
    std::size_t pending = out.per_target.size();
    for (std::size_t i = 1; i <= budget && pending > 0; ++i) {
        std::vector<ActionSpec> candidates = enumerate_actions(model, state);
        ActionSpec action = candidates[rng_below(act_rng, candidates.size())];
        StepResult sr = step(model, state, action, env_rng);
        DirectedEvent ev;
        ev.global_index = i;
        ev.phase_index = i;
        ev.action = action;
        ev.covered = sr.covered;
        ev.from_screen = state.screen_id;
        ev.to_screen = sr.next.screen_id;
        ev.exited = sr.exited;
        out.events.push_back(std::move(ev));
        for (FunctionId f : sr.covered) {
            auto it = slot.find(f);
            if (it == slot.end()) continue;
            TargetOutcome& t = out.per_target[it->second];
            if (t.covered) continue;
            t.covered = true;
            t.events_used = i;
            t.first_covered_event = static_cast<long>(i);
            --pending;
        }
        state = std::move(sr.next);
        out.total_events = i;
    }
    for (TargetOutcome& t : out.per_target) {
        if (!t.covered) {
            t.events_used = budget; // censored
        }
    }
    return out;
}

void append_rows(RunReport& report, std::uint64_t seed,
                 const std::vector<TargetOutcome>& per_target, std::size_t total_events,
                 const std::map<FunctionId, std::uint64_t>& heat) {
    SeedSummary summary;
    summary.seed = seed;
    summary.total_targets = per_target.size();
    summary.total_events = total_events;
    for (const TargetOutcome& t : per_target) {
        TargetRow row;
        row.seed = seed;
        row.function_id = t.target;
        row.covered = t.covered;
        row.events_used = t.events_used;
        row.first_covered_event = t.first_covered_event;
        row.incidental = t.incidental;
        auto it = heat.find(t.target);
        row.heat = it == heat.end() ? 0 : it->second;
        report.rows.push_back(row);
        if (t.covered) {
            ++summary.covered_count;
        }
    }
    report.summaries.push_back(summary);
}

std::string report_markdown(const RunReport& report) {
    std::ostringstream md;
    md << "# " << report.command << " report: " << report.app_name << " (" << report.policy
       << ")\n\n";
    md << "| seed | covered | targets | events |\n|---:|---:|---:|---:|\n";
    double mean_covered = 0.0;
    for (const SeedSummary& s : report.summaries) {
        md << "| " << s.seed << " | " << s.covered_count << " | " << s.total_targets << " | "
           << s.total_events << " |\n";
        mean_covered += static_cast<double>(s.covered_count);
    }
    if (!report.summaries.empty()) {
        mean_covered /= static_cast<double>(report.summaries.size());
        md << "\nmean covered: " << fmt_double(mean_covered) << "\n";
    }
    return md.str();
}

void write_run_report(const RunReport& report, const std::string& events_log,
                      const std::filesystem::path& out_dir) {
    atomic_write_file(out_dir / "report.csv", run_report_csv(report));
    atomic_write_file(out_dir / "summary.csv", run_summary_csv(report));
    atomic_write_file(out_dir / "report.md", report_markdown(report));
    atomic_write_file(out_dir / "events.jsonl", events_log);
}

} // namespace

std::map<FunctionId, std::uint64_t> load_heat_csv(const std::filesystem::path& path) {
    std::map<FunctionId, std::uint64_t> heat;
    std::ifstream in(path);
    if (!in) {
        return heat;
    }
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) continue;
        heat[static_cast<FunctionId>(std::stoul(line.substr(0, comma)))] =
            std::stoull(line.substr(comma + 1));
    }
    return heat;
}

RunReport cmd_evaluate(const ExperimentSpec& spec, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    AppModel model = resolve_app(spec);
    Checkpoint ckpt = load_checkpoint(checkpoint);
    if (ckpt.meta.app_fingerprint != 0 && ckpt.meta.app_fingerprint != model_fingerprint(model)) {
        throw Error(Errc::validation,
                    "checkpoint was trained against a different app model");
    }
    auto snapshot = snapshot_from_checkpoint(ckpt, false);
    auto heat = load_heat_csv(checkpoint.parent_path() / "heat.csv");

    RunReport report;
    report.command = "evaluate";
    report.policy = "guided";
    report.app_name = model.name;
    std::string events_log;
    for (std::uint64_t seed : spec.seeds) {
        std::vector<FunctionId> targets = sample_targets(spec.targets, model, seed);
        if (spec.budget_events == 0) {
            std::vector<TargetOutcome> none;
            none.reserve(targets.size());
            for (FunctionId t : targets) {
                none.push_back(TargetOutcome{t, false, 0, false, -1});
            }
            append_rows(report, seed, none, 0, heat);
            continue;
        }
        DirectedRunConfig cfg;
        cfg.targets = targets;
        cfg.max_directed_steps = spec.max_directed_steps;
        cfg.total_event_budget = spec.budget_events;
        cfg.epsilon = spec.directed_epsilon;
        DirectedReport dr = guided_explore(model, *snapshot, cfg, seed);
        append_rows(report, seed, dr.per_target, dr.total_events, heat);
        for (const DirectedEvent& ev : dr.events) {
            json row = directed_event_to_json(ev, false);
            row["seed"] = seed;
            events_log += row.dump();
            events_log += '\n';
        }
    }
    write_run_report(report, events_log, out_dir);
    write_manifest(build_manifest("evaluate", spec, model, checkpoint, "report.csv",
                                  {"report.csv", "summary.csv", "report.md", "events.jsonl"}),
                   out_dir);
    return report;
}

RunReport cmd_baseline_random(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    AppModel model = resolve_app(spec);
    RunReport report;
    report.command = "baseline";
    report.policy = "random";
    report.app_name = model.name;
    std::map<FunctionId, std::uint64_t> heat; // no training behind a random walk
    std::string events_log;
    for (std::uint64_t seed : spec.seeds) {
        std::vector<FunctionId> targets = sample_targets(spec.targets, model, seed);
        WalkOutcome walk = random_walk(model, targets, spec.budget_events, seed);
        append_rows(report, seed, walk.per_target, walk.total_events, heat);
        for (const DirectedEvent& ev : walk.events) {
            json row = directed_event_to_json(ev, true);
            row["seed"] = seed;
            events_log += row.dump();
            events_log += '\n';
        }
    }
    write_run_report(report, events_log, out_dir);
    write_manifest(build_manifest("baseline", spec, model, std::nullopt, "report.csv",
                                  {"report.csv", "summary.csv", "report.md", "events.jsonl"}),
                   out_dir);
    return report;
}

// ---- commit eval -----------------------------------------------------------------------

std::vector<CommitRow> cmd_commit_eval(const ExperimentSpec& spec,
                                       const std::filesystem::path& checkpoint,
                                       const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    AppModel model = resolve_app(spec);

    std::vector<std::pair<std::string, std::vector<FunctionId>>> sets;
    if (spec.targets.mode == TargetMode::changed_set && !spec.targets.set_name.empty()) {
        auto it = model.functions.changed_sets.find(spec.targets.set_name);
        if (it == model.functions.changed_sets.end()) {
            throw Error(Errc::validation, "unknown changed set \"" + spec.targets.set_name + "\"");
        }
        sets.emplace_back(it->first, it->second);
    } else {
        for (const auto& [name, ids] : model.functions.changed_sets) {
            sets.emplace_back(name, ids);
        }
    }
    if (sets.empty()) {
        throw Error(Errc::validation, "app model declares no changed sets");
    }

    std::shared_ptr<const ModelSnapshot> snapshot;
    std::optional<std::filesystem::path> ckpt_path;
    if (spec.policy == "guided") {
        Checkpoint ckpt = load_checkpoint(checkpoint);
        if (ckpt.meta.app_fingerprint != 0 &&
            ckpt.meta.app_fingerprint != model_fingerprint(model)) {
            throw Error(Errc::validation,
                        "checkpoint was trained against a different app model");
        }
        snapshot = snapshot_from_checkpoint(ckpt, false);
        ckpt_path = checkpoint;
    }

    std::vector<CommitRow> rows;
    std::string events_log;
    for (const auto& [name, members] : sets) {
        for (std::uint64_t seed : spec.seeds) {
            CommitRow row;
            row.set_name = name;
            row.seed = seed;
            row.members = members.size();
            std::vector<TargetOutcome> per_target;
            std::vector<DirectedEvent> events;
            if (spec.policy == "guided") {
                DirectedRunConfig cfg;
                cfg.targets = members;
                cfg.max_directed_steps = spec.max_directed_steps;
                cfg.total_event_budget = spec.budget_events;
                cfg.epsilon = spec.directed_epsilon;
                DirectedReport dr = guided_explore(model, *snapshot, cfg, seed);
                per_target = dr.per_target;
                events = std::move(dr.events);
            } else {
                WalkOutcome walk = random_walk(model, members, spec.budget_events, seed);
                per_target = walk.per_target;
                events = std::move(walk.events);
            }
            long last = 0;
            row.covered_all = true;
            for (const TargetOutcome& t : per_target) {
                if (!t.covered) {
                    row.covered_all = false;
                    break;
                }
                last = std::max(last, t.first_covered_event);
            }
            row.events_to_cover =
                row.covered_all ? static_cast<std::size_t>(last) : spec.budget_events;
            rows.push_back(row);
            for (const DirectedEvent& ev : events) {
                json erow = directed_event_to_json(ev, spec.policy == "random");
                erow["seed"] = seed;
                erow["set"] = name;
                events_log += erow.dump();
                events_log += '\n';
            }
        }
    }

    atomic_write_file(out_dir / "commit_report.csv", commit_report_csv(rows));
    std::ostringstream md;
    md << "# commit-eval report: " << model.name << " (" << spec.policy << ")\n\n";
    md << "| commit | seed | members | covered all | events |\n|---|---:|---:|---:|---:|\n";
    for (const CommitRow& r : rows) {
        md << "| " << r.set_name << " | " << r.seed << " | " << r.members << " | "
           << (r.covered_all ? 1 : 0) << " | " << r.events_to_cover << " |\n";
    }
    atomic_write_file(out_dir / "report.md", md.str());
    atomic_write_file(out_dir / "events.jsonl", events_log);
    ExperimentSpec manifest_spec = spec;
    write_manifest(build_manifest("commit-eval", manifest_spec, model, ckpt_path,
                                  "commit_report.csv",
                                  {"commit_report.csv", "report.md", "events.jsonl"}),
                   out_dir);
    return rows;
}

// ---- csv -----------------------------------------------------------------------------

std::string run_report_csv(const RunReport& report) {
    std::string out = "seed,function_id,covered,events_used,first_covered_event,incidental,heat\n";
    for (const TargetRow& r : report.rows) {
        out += std::to_string(r.seed) + "," + std::to_string(r.function_id) + "," +
               (r.covered ? "1" : "0") + "," + std::to_string(r.events_used) + "," +
               std::to_string(r.first_covered_event) + "," + (r.incidental ? "1" : "0") + "," +
               std::to_string(r.heat) + "\n";
    }
    return out;
}

std::string run_summary_csv(const RunReport& report) {
    std::string out = "seed,covered_count,total_targets,total_events\n";
    for (const SeedSummary& s : report.summaries) {
        out += std::to_string(s.seed) + "," + std::to_string(s.covered_count) + "," +
               std::to_string(s.total_targets) + "," + std::to_string(s.total_events) + "\n";
    }
    return out;
}

std::string commit_report_csv(const std::vector<CommitRow>& rows) {
    std::string out = "set_name,seed,members,covered_all,events_to_cover\n";
    for (const CommitRow& r : rows) {
        out += r.set_name + "," + std::to_string(r.seed) + "," + std::to_string(r.members) + "," +
               (r.covered_all ? "1" : "0") + "," + std::to_string(r.events_to_cover) + "\n";
    }
    return out;
}

RunReport run_report_from_dir(const std::filesystem::path& run_dir) {
    json manifest = read_json_file(run_dir / "manifest.json");
    RunReport report;
    report.command = manifest.at("command").get<std::string>();
    report.policy = manifest.at("spec").at("policy").get<std::string>();
    if (report.command == "baseline") {
        report.policy = "random";
    }
    report.app_name = manifest.at("app").at("name").get<std::string>();

    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        return cells;
    };

    {
        std::istringstream in(read_file(run_dir / "report.csv"));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto c = split(line);
            TargetRow row;
            row.seed = std::stoull(c.at(0));
            row.function_id = static_cast<FunctionId>(std::stoul(c.at(1)));
            row.covered = c.at(2) == "1";
            row.events_used = std::stoull(c.at(3));
            row.first_covered_event = std::stol(c.at(4));
            row.incidental = c.at(5) == "1";
            row.heat = std::stoull(c.at(6));
            report.rows.push_back(row);
        }
    }
    {
        std::istringstream in(read_file(run_dir / "summary.csv"));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto c = split(line);
            SeedSummary s;
            s.seed = std::stoull(c.at(0));
            s.covered_count = std::stoull(c.at(1));
            s.total_targets = std::stoull(c.at(2));
            s.total_events = std::stoull(c.at(3));
            report.summaries.push_back(s);
        }
    }
    return report;
}

// ---- report merging ---------------------------------------------------------------------

void cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir) {
    if (run_dirs.empty()) {
        throw Error(Errc::validation, "report requires at least one run directory");
    }
    std::filesystem::create_directories(out_dir);

    std::vector<json> manifests;
    for (const auto& dir : run_dirs) {
        manifests.push_back(read_json_file(dir / "manifest.json"));
    }
    std::string app_fp = manifests.front().at("app").at("fingerprint").get<std::string>();
    bool commit_mode = manifests.front().at("command") == "commit-eval";
    for (const json& m : manifests) {
        if (m.at("app").at("fingerprint").get<std::string>() != app_fp) {
            throw Error(Errc::validation, "runs target different app models");
        }
        if ((m.at("command") == "commit-eval") != commit_mode) {
            throw Error(Errc::validation, "cannot merge commit-eval runs with target runs");
        }
    }

    auto label_of = [&](std::size_t i) {
        std::string policy = manifests[i].at("spec").at("policy").get<std::string>();
        if (manifests[i].at("command") == "baseline") {
            policy = "random";
        }
        std::size_t dup = 0;
        for (std::size_t j = 0; j < i; ++j) {
            std::string other = manifests[j].at("spec").at("policy").get<std::string>();
            if (manifests[j].at("command") == "baseline") other = "random";
            if (other == policy) ++dup;
        }
        return dup == 0 ? policy : policy + "#" + std::to_string(dup + 1);
    };

    std::ostringstream csv;
    std::ostringstream md;

    if (commit_mode) {
        // rows = (commit, seed), one column per run (policy)
        std::vector<std::vector<CommitRow>> all;
        for (const auto& dir : run_dirs) {
            std::vector<CommitRow> rows;
            std::istringstream in(read_file(dir / "commit_report.csv"));
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                CommitRow r;
                std::size_t p0 = line.find(',');
                std::size_t p1 = line.find(',', p0 + 1);
                std::size_t p2 = line.find(',', p1 + 1);
                std::size_t p3 = line.find(',', p2 + 1);
                r.set_name = line.substr(0, p0);
                r.seed = std::stoull(line.substr(p0 + 1, p1 - p0 - 1));
                r.members = std::stoull(line.substr(p1 + 1, p2 - p1 - 1));
                r.covered_all = line.substr(p2 + 1, p3 - p2 - 1) == "1";
                r.events_to_cover = std::stoull(line.substr(p3 + 1));
                rows.push_back(r);
            }
            all.push_back(std::move(rows));
        }
        for (const auto& rows : all) {
            if (rows.size() != all.front().size()) {
                throw Error(Errc::validation, "mismatched commit sets across runs");
            }
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].set_name != all.front()[i].set_name ||
                    rows[i].seed != all.front()[i].seed) {
                    throw Error(Errc::validation, "mismatched commit sets across runs");
                }
            }
        }
        csv << "set_name,seed";
        md << "| commit | seed";
        for (std::size_t p = 0; p < all.size(); ++p) {
            csv << "," << label_of(p) << "_events";
            md << " | " << label_of(p);
        }
        csv << "\n";
        md << " |\n|---|---:";
        for (std::size_t p = 0; p < all.size(); ++p) {
            md << "|---:";
        }
        md << "|\n";
        for (std::size_t i = 0; i < all.front().size(); ++i) {
            csv << all.front()[i].set_name << "," << all.front()[i].seed;
            md << "| " << all.front()[i].set_name << " | " << all.front()[i].seed;
            std::size_t best = 0;
            for (std::size_t p = 1; p < all.size(); ++p) {
                if (all[p][i].events_to_cover < all[best][i].events_to_cover) {
                    best = p;
                }
            }
            for (std::size_t p = 0; p < all.size(); ++p) {
                csv << "," << all[p][i].events_to_cover;
                if (all.size() > 1 && p == best) {
                    md << " | **" << all[p][i].events_to_cover << "**";
                } else {
                    md << " | " << all[p][i].events_to_cover;
                }
            }
            csv << "\n";
            md << " |\n";
        }
        csv << "summary,metric";
        for (std::size_t p = 0; p < all.size(); ++p) {
            csv << "," << label_of(p);
        }
        csv << "\n";
        md << "\n";
        for (std::size_t p = 0; p < all.size(); ++p) {
            double mean = 0.0;
            double success = 0.0;
            for (const CommitRow& r : all[p]) {
                mean += static_cast<double>(r.events_to_cover);
                if (r.covered_all) success += 1.0;
            }
            mean /= static_cast<double>(all[p].size());
            success /= static_cast<double>(all[p].size());
            csv << "summary,mean_events_" << label_of(p) << "," << fmt_double(mean) << "\n";
            csv << "summary,success_rate_" << label_of(p) << "," << fmt_double(success) << "\n";
            md << "- " << label_of(p) << ": mean events " << fmt_double(mean) << ", success rate "
               << fmt_double(success) << "\n";
        }
    } else {
        std::vector<RunReport> reports;
        for (const auto& dir : run_dirs) {
            reports.push_back(run_report_from_dir(dir));
        }
        // same (seed -> target list) everywhere
        auto key_rows = [](const RunReport& r) {
            std::map<std::uint64_t, std::vector<FunctionId>> m;
            for (const TargetRow& row : r.rows) {
                m[row.seed].push_back(row.function_id);
            }
            return m;
        };
        auto base_keys = key_rows(reports.front());
        for (const RunReport& r : reports) {
            if (key_rows(r) != base_keys) {
                throw Error(Errc::validation, "mismatched target sets across runs");
            }
        }
        csv << "seed";
        md << "| seed";
        for (std::size_t p = 0; p < reports.size(); ++p) {
            csv << "," << label_of(p) << "_covered";
            md << " | " << label_of(p) << " covered";
        }
        csv << ",total_targets\n";
        md << " | targets |\n|---:";
        for (std::size_t p = 0; p < reports.size(); ++p) {
            md << "|---:";
        }
        md << "|---:|\n";
        std::vector<double> means(reports.size(), 0.0);
        for (std::size_t i = 0; i < reports.front().summaries.size(); ++i) {
            const SeedSummary& base = reports.front().summaries[i];
            csv << base.seed;
            md << "| " << base.seed;
            std::size_t best = 0;
            for (std::size_t p = 1; p < reports.size(); ++p) {
                if (reports[p].summaries[i].covered_count >
                    reports[best].summaries[i].covered_count) {
                    best = p;
                }
            }
            for (std::size_t p = 0; p < reports.size(); ++p) {
                std::size_t covered = reports[p].summaries[i].covered_count;
                means[p] += static_cast<double>(covered);
                csv << "," << covered;
                if (reports.size() > 1 && p == best) {
                    md << " | **" << covered << "**";
                } else {
                    md << " | " << covered;
                }
            }
            csv << "," << base.total_targets << "\n";
            md << " | " << base.total_targets << " |\n";
        }
        md << "\n";
        for (std::size_t p = 0; p < reports.size(); ++p) {
            means[p] /= static_cast<double>(reports.front().summaries.size());
            csv << "mean," << label_of(p) << "," << fmt_double(means[p]) << "\n";
            md << "- " << label_of(p) << ": mean covered " << fmt_double(means[p]) << "\n";
        }
    }
    atomic_write_file(out_dir / "merged.csv", csv.str());
    atomic_write_file(out_dir / "merged.md", md.str());
}

std::filesystem::path cmd_gen_app(const GeneratorSpec& spec,
                                  const std::filesystem::path& out_file) {
    AppModel model = generate_synthetic_app(spec);
    if (out_file.has_parent_path()) {
        std::filesystem::create_directories(out_file.parent_path());
    }
    save_app_model(model, out_file);
    return out_file;
}

// ---- replay ---------------------------------------------------------------------------

bool cmd_replay(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir) {
    json manifest = read_json_file(manifest_path);
    std::string command = manifest.at("command").get<std::string>();
    ExperimentSpec spec = experiment_spec_from_json(manifest.at("spec"));
    std::filesystem::path original_dir = manifest_path.parent_path();

    if (!spec.app_path.empty()) {
        AppModel model = load_app_model(spec.app_path);
        std::string fp = hex64(model_fingerprint(model));
        if (fp != manifest.at("app").at("fingerprint").get<std::string>()) {
            throw Error(Errc::validation,
                        "app model file changed since the original run (fingerprint mismatch)");
        }
    }
    std::filesystem::path checkpoint;
    if (manifest.contains("checkpoint")) {
        checkpoint = manifest.at("checkpoint").at("path").get<std::string>();
        std::string fp = hex64(checkpoint_fingerprint(checkpoint));
        if (fp != manifest.at("checkpoint").at("fingerprint").get<std::string>()) {
            throw Error(Errc::validation,
                        "checkpoint changed since the original run (fingerprint mismatch)");
        }
    }

    if (command == "train") {
        cmd_train(spec, out_dir);
    } else if (command == "evaluate") {
        cmd_evaluate(spec, checkpoint, out_dir);
    } else if (command == "baseline") {
        cmd_baseline_random(spec, out_dir);
    } else if (command == "commit-eval") {
        cmd_commit_eval(spec, checkpoint, out_dir);
    } else {
        throw Error(Errc::validation, "manifest command \"" + command + "\" is not replayable");
    }

    std::string primary = manifest.at("outputs").at("primary").get<std::string>();
    return read_file(original_dir / primary) == read_file(out_dir / primary);
}

} // namespace guiq
