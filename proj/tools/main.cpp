// Command-line front end. Links the shared library through its C API only;
// all it does is assemble spec JSON from flags/config files and dispatch.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "guiq/guiq.h"

using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 validation/parse problems, 3 runtime failures.
int exit_code_of(guiq_status status) {
    switch (status) {
        case GUIQ_OK: return 0;
        case GUIQ_ERR_INVALID_ARG:
        case GUIQ_ERR_PARSE:
        case GUIQ_ERR_VALIDATION: return 2;
        default: return 3;
    }
}

int fail(guiq_status status) {
    std::cerr << "error: " << guiq_last_error() << "\n";
    return exit_code_of(status);
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "run";
    std::string app_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::optional<std::uint64_t> budget;
    std::string policy;
    std::string targets_mode;
    std::optional<std::uint64_t> targets_k;
    std::string targets_name;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment spec JSON file");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--app", app_path, "app model JSON file");
        cmd->add_option("--seed", seed, "single seed (overrides the config)");
        cmd->add_option("--seeds", seeds, "seed list")->delimiter(',');
        cmd->add_option("--budget", budget, "event budget per run");
        cmd->add_option("--policy", policy, "guided or random");
        cmd->add_option("--targets", targets_mode, "target mode: random_k, changed_set, listener_like");
        cmd->add_option("--target-k", targets_k, "number of sampled targets");
        cmd->add_option("--target-set", targets_name, "changed-set name");
    }

    json build_spec() const {
        json spec = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                throw std::runtime_error("cannot open config file: " + config_path);
            }
            in >> spec;
        }
        if (!app_path.empty()) {
            spec["app"] = json{{"path", app_path}};
        }
        if (seed) {
            spec["seeds"] = json::array({*seed});
            if (!spec.contains("train")) spec["train"] = json::object();
            spec["train"]["seed"] = *seed;
        }
        if (!seeds.empty()) {
            spec["seeds"] = seeds;
        }
        if (budget) {
            spec["budget_events"] = *budget;
        }
        if (!policy.empty()) {
            spec["policy"] = policy;
        }
        if (!targets_mode.empty() || targets_k || !targets_name.empty()) {
            json t = spec.value("targets", json::object());
            if (!targets_mode.empty()) t["mode"] = targets_mode;
            if (targets_k) t["k"] = *targets_k;
            if (!targets_name.empty()) t["name"] = targets_name;
            spec["targets"] = t;
        }
        return spec;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"change-targeted GUI test generation on simulated app models"};
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, commit_flags, baseline_flags;
    std::string checkpoint_path;
    std::string commit_checkpoint;
    std::vector<std::string> report_dirs;
    std::string report_out = "report";
    std::string manifest_path;
    std::string replay_out = "replay";
    std::string gen_out = "app.json";
    std::string gen_spec_path;
    json gen_spec = json::object();
    std::optional<int> gen_screens, gen_functions, gen_branching, gen_sets;
    std::optional<double> gen_noop, gen_exit;
    std::optional<std::uint64_t> gen_seed;
    std::string gen_name;

    auto* train = app.add_subcommand("train", "train a model against an app");
    train_flags.attach(train);

    auto* evaluate = app.add_subcommand("evaluate", "directed coverage of sampled targets");
    eval_flags.attach(evaluate);
    evaluate->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();

    auto* commit = app.add_subcommand("commit-eval", "events to cover changed-function sets");
    commit_flags.attach(commit);
    commit->add_option("--checkpoint", commit_checkpoint, "trained checkpoint (guided policy)");

    auto* baseline = app.add_subcommand("baseline", "random-walk baseline with identical reporting");
    baseline_flags.attach(baseline);

    auto* report = app.add_subcommand("report", "merge run reports into comparison tables");
    report->add_option("runs", report_dirs, "run directories")->required();
    report->add_option("--out", report_out, "output directory");

    auto* gen = app.add_subcommand("gen-app", "generate a synthetic app model file");
    gen->add_option("--spec", gen_spec_path, "generator spec JSON file");
    gen->add_option("--out", gen_out, "output model file");
    gen->add_option("--name", gen_name, "app name");
    gen->add_option("--screens", gen_screens, "screen count");
    gen->add_option("--functions", gen_functions, "function count");
    gen->add_option("--branching", gen_branching, "transitions per screen");
    gen->add_option("--noop", gen_noop, "inert action fraction");
    gen->add_option("--exit", gen_exit, "exit transition fraction");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--changed-sets", gen_sets, "synthetic commit count");

    auto* replay = app.add_subcommand("replay", "re-execute a run manifest and diff the report");
    replay->add_option("manifest", manifest_path, "manifest.json of the original run")->required();
    replay->add_option("--out", replay_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            guiq_status s = guiq_run_train(train_flags.build_spec().dump().c_str(),
                                           train_flags.out_dir.c_str());
            if (s != GUIQ_OK) return fail(s);
            std::cout << "train outputs in " << train_flags.out_dir << "\n";
        } else if (evaluate->parsed()) {
            guiq_status s = guiq_run_evaluate(eval_flags.build_spec().dump().c_str(),
                                              checkpoint_path.c_str(),
                                              eval_flags.out_dir.c_str());
            if (s != GUIQ_OK) return fail(s);
            std::cout << "evaluation report in " << eval_flags.out_dir << "\n";
        } else if (commit->parsed()) {
            guiq_status s = guiq_run_commit_eval(commit_flags.build_spec().dump().c_str(),
                                                 commit_checkpoint.empty()
                                                     ? nullptr
                                                     : commit_checkpoint.c_str(),
                                                 commit_flags.out_dir.c_str());
            if (s != GUIQ_OK) return fail(s);
            std::cout << "commit report in " << commit_flags.out_dir << "\n";
        } else if (baseline->parsed()) {
            guiq_status s = guiq_run_baseline(baseline_flags.build_spec().dump().c_str(),
                                              baseline_flags.out_dir.c_str());
            if (s != GUIQ_OK) return fail(s);
            std::cout << "baseline report in " << baseline_flags.out_dir << "\n";
        } else if (report->parsed()) {
            std::vector<const char*> dirs;
            for (const std::string& d : report_dirs) {
                dirs.push_back(d.c_str());
            }
            guiq_status s = guiq_run_report(dirs.data(), dirs.size(), report_out.c_str());
            if (s != GUIQ_OK) return fail(s);
            std::cout << "merged report in " << report_out << "\n";
        } else if (gen->parsed()) {
            if (!gen_spec_path.empty()) {
                std::ifstream in(gen_spec_path);
                if (!in) {
                    throw std::runtime_error("cannot open generator spec: " + gen_spec_path);
                }
                in >> gen_spec;
            }
            if (!gen_name.empty()) gen_spec["name"] = gen_name;
            if (gen_screens) gen_spec["n_screens"] = *gen_screens;
            if (gen_functions) gen_spec["n_functions"] = *gen_functions;
            if (gen_branching) gen_spec["branching"] = *gen_branching;
            if (gen_noop) gen_spec["noop_fraction"] = *gen_noop;
            if (gen_exit) gen_spec["exit_fraction"] = *gen_exit;
            if (gen_seed) gen_spec["seed"] = *gen_seed;
            if (gen_sets) gen_spec["n_changed_sets"] = *gen_sets;

            guiq_app_model* model = nullptr;
            guiq_status s = guiq_app_model_generate(gen_spec.dump().c_str(), &model);
            if (s != GUIQ_OK) return fail(s);
            s = guiq_app_model_save(model, gen_out.c_str());
            if (s != GUIQ_OK) {
                guiq_app_model_free(model);
                return fail(s);
            }
            char* info = nullptr;
            guiq_app_model_info(model, &info);
            if (info) {
                std::cout << info << "\n";
                guiq_string_free(info);
            }
            guiq_app_model_free(model);
            std::cout << "model written to " << gen_out << "\n";
        } else if (replay->parsed()) {
            int identical = 0;
            guiq_status s =
                guiq_run_replay(manifest_path.c_str(), replay_out.c_str(), &identical);
            if (s != GUIQ_OK) return fail(s);
            if (identical) {
                std::cout << "replay identical\n";
            } else {
                std::cerr << "replay differs from the original report\n";
                return 3;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
