#pragma once

#include "coordinator.hpp"

namespace guiq {

enum class TargetMode { random_k, changed_set, listener_like };

struct TargetSelection {
    TargetMode mode = TargetMode::random_k;
    std::size_t k = 50;
    std::string set_name; // for changed_set
};

struct TrainSpec {
    std::uint64_t seed = 0;
    std::size_t trainer_steps = 5000;
    std::size_t session_actions = 8000; // per session
    std::size_t sessions = 1;
    std::size_t refresh_interval = 100;
    std::size_t metrics_every = 1;
    std::vector<std::size_t> net_hidden = kDefaultHiddenSizes;
    TrainerConfig trainer;
    EncoderConfig encoder;
    EpsilonSchedule epsilon;
};

/// Everything a run needs, resolved; serialized verbatim into the manifest so
/// `replay` can re-execute it bit-exactly.
struct ExperimentSpec {
    std::string app_path;                   // one of app_path / generator
    std::optional<GeneratorSpec> generator; //
    std::string policy = "guided";          // guided | random
    std::vector<std::uint64_t> seeds = {1};
    std::size_t budget_events = 1000;
    std::size_t max_directed_steps = 200;
    double directed_epsilon = 0.0;
    TargetSelection targets;
    TrainSpec train;
};

ExperimentSpec experiment_spec_from_json(const nlohmann::json& doc);
nlohmann::json experiment_spec_to_json(const ExperimentSpec& spec);

AppModel resolve_app(const ExperimentSpec& spec);

/// Deterministic target sampling shared by every policy: identical
/// (spec, model, seed) always yields the same ordered target list.
std::vector<FunctionId> sample_targets(const TargetSelection& sel, const AppModel& model,
                                       std::uint64_t seed);

// ---- run outputs -------------------------------------------------------------

struct TargetRow {
    std::uint64_t seed = 0;
    FunctionId function_id = 0;
    bool covered = false;
    std::size_t events_used = 0;
    long first_covered_event = -1;
    bool incidental = false;
    std::uint64_t heat = 0;
};

struct SeedSummary {
    std::uint64_t seed = 0;
    std::size_t covered_count = 0;
    std::size_t total_targets = 0;
    std::size_t total_events = 0;
};

struct RunReport {
    std::string command; // evaluate | baseline | commit-eval
    std::string policy;
    std::string app_name;
    std::vector<TargetRow> rows;
    std::vector<SeedSummary> summaries;
};

struct CommitRow {
    std::string set_name;
    std::uint64_t seed = 0;
    std::size_t members = 0;
    bool covered_all = false;
    std::size_t events_to_cover = 0; // censored at the budget when not covered
};

struct TrainOutputs {
    std::filesystem::path manifest;
    std::filesystem::path metrics_csv;
    std::filesystem::path heat_csv;
    std::filesystem::path events_jsonl;
    std::optional<std::filesystem::path> checkpoint;
    std::uint64_t trainer_steps = 0;
};

// ---- commands ------------------------------------------------------------------

TrainOutputs cmd_train(const ExperimentSpec& spec, const std::filesystem::path& out_dir);

RunReport cmd_evaluate(const ExperimentSpec& spec, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& out_dir);

RunReport cmd_baseline_random(const ExperimentSpec& spec, const std::filesystem::path& out_dir);

std::vector<CommitRow> cmd_commit_eval(const ExperimentSpec& spec,
                                       const std::filesystem::path& checkpoint,
                                       const std::filesystem::path& out_dir);

void cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir);

std::filesystem::path cmd_gen_app(const GeneratorSpec& spec, const std::filesystem::path& out_file);

/// Re-executes the run described by a manifest into `out_dir` and compares the
/// primary report byte-for-byte. True = identical.
bool cmd_replay(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir);

// ---- report helpers (exposed for tests) -----------------------------------------

std::string run_report_csv(const RunReport& report);
std::string run_summary_csv(const RunReport& report);
std::string commit_report_csv(const std::vector<CommitRow>& rows);
RunReport run_report_from_dir(const std::filesystem::path& run_dir);

std::map<FunctionId, std::uint64_t> load_heat_csv(const std::filesystem::path& path);

void atomic_write_file(const std::filesystem::path& path, std::string_view content);

} // namespace guiq
