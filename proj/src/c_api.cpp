#include "guiq/guiq.h"

#include <cstring>

#include <nlohmann/json.hpp>

#include "harness.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

guiq_status status_of(guiq::Errc code) {
    switch (code) {
        case guiq::Errc::invalid_arg: return GUIQ_ERR_INVALID_ARG;
        case guiq::Errc::parse: return GUIQ_ERR_PARSE;
        case guiq::Errc::validation: return GUIQ_ERR_VALIDATION;
        case guiq::Errc::io: return GUIQ_ERR_IO;
        case guiq::Errc::protocol: return GUIQ_ERR_PROTOCOL;
        case guiq::Errc::runtime: return GUIQ_ERR_RUNTIME;
    }
    return GUIQ_ERR_RUNTIME;
}

template <typename Fn>
guiq_status guarded(Fn&& fn) {
    try {
        fn();
        return GUIQ_OK;
    } catch (const guiq::Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return GUIQ_ERR_RUNTIME;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

guiq::ExperimentSpec parse_spec(const char* spec_json) {
    if (spec_json == nullptr) {
        throw guiq::Error(guiq::Errc::invalid_arg, "spec_json must not be NULL");
    }
    json doc;
    try {
        doc = json::parse(spec_json);
    } catch (const std::exception& e) {
        throw guiq::Error(guiq::Errc::parse, std::string("invalid spec JSON: ") + e.what());
    }
    return guiq::experiment_spec_from_json(doc);
}

void require(bool ok, const char* what) {
    if (!ok) {
        throw guiq::Error(guiq::Errc::invalid_arg, std::string(what) + " must not be NULL");
    }
}

} // namespace

struct guiq_app_model {
    guiq::AppModel model;
};

struct guiq_session {
    const guiq_app_model* model;
    guiq::GuiState state;
    guiq::Rng rng;
};

extern "C" {

const char* guiq_version(void) { return "0.1.0"; }

const char* guiq_last_error(void) { return g_last_error.c_str(); }

void guiq_string_free(char* s) { std::free(s); }

guiq_status guiq_app_model_load(const char* path, guiq_app_model** out_model) {
    return guarded([&] {
        require(path && out_model, "path/out_model");
        auto handle = std::make_unique<guiq_app_model>();
        handle->model = guiq::load_app_model(path);
        *out_model = handle.release();
    });
}

guiq_status guiq_app_model_generate(const char* generator_json, guiq_app_model** out_model) {
    return guarded([&] {
        require(generator_json && out_model, "generator_json/out_model");
        json doc;
        try {
            doc = json::parse(generator_json);
        } catch (const std::exception& e) {
            throw guiq::Error(guiq::Errc::parse,
                              std::string("invalid generator JSON: ") + e.what());
        }
        auto handle = std::make_unique<guiq_app_model>();
        handle->model = guiq::generate_synthetic_app(guiq::generator_spec_from_json(doc));
        *out_model = handle.release();
    });
}

guiq_status guiq_app_model_save(const guiq_app_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "model/path");
        guiq::save_app_model(model->model, path);
    });
}

guiq_status guiq_app_model_info(const guiq_app_model* model, char** out_json) {
    return guarded([&] {
        require(model && out_json, "model/out_json");
        json info{{"name", model->model.name},
                  {"version", model->model.version},
                  {"entry", model->model.entry_screen},
                  {"screens", model->model.screens.size()},
                  {"transitions", model->model.transitions.size()},
                  {"functions", model->model.functions.entries.size()},
                  {"changed_sets", model->model.functions.changed_sets.size()},
                  {"fingerprint", guiq::hex64(guiq::model_fingerprint(model->model))}};
        *out_json = dup_string(info.dump());
    });
}

guiq_status guiq_app_model_shortest_distance(const guiq_app_model* model, uint32_t function_id,
                                             int32_t* out_distance) {
    return guarded([&] {
        require(model && out_distance, "model/out_distance");
        auto d = guiq::shortest_trigger_distance(model->model, function_id);
        *out_distance = d ? static_cast<int32_t>(*d) : -1;
    });
}

void guiq_app_model_free(guiq_app_model* model) { delete model; }

guiq_status guiq_session_open(const guiq_app_model* model, uint64_t seed,
                              guiq_session** out_session) {
    return guarded([&] {
        require(model && out_session, "model/out_session");
        auto session = std::make_unique<guiq_session>();
        session->model = model;
        session->state = guiq::initial_state(model->model);
        session->rng = guiq::make_rng(seed);
        *out_session = session.release();
    });
}

guiq_status guiq_session_state(const guiq_session* session, char** out_json) {
    return guarded([&] {
        require(session && out_json, "session/out_json");
        *out_json = dup_string(guiq::gui_state_to_json(session->state).dump());
    });
}

guiq_status guiq_session_actions(const guiq_session* session, char** out_json) {
    return guarded([&] {
        require(session && out_json, "session/out_json");
        json actions = json::array();
        for (const auto& a : guiq::enumerate_actions(session->model->model, session->state)) {
            actions.push_back(guiq::action_to_json(a));
        }
        *out_json = dup_string(actions.dump());
    });
}

guiq_status guiq_session_step(guiq_session* session, const char* action_json,
                              char** out_result_json) {
    return guarded([&] {
        require(session && action_json && out_result_json, "session/action_json/out_result_json");
        json doc;
        try {
            doc = json::parse(action_json);
        } catch (const std::exception& e) {
            throw guiq::Error(guiq::Errc::parse, std::string("invalid action JSON: ") + e.what());
        }
        guiq::ActionSpec action = guiq::action_from_json(doc);
        guiq::StepResult result =
            guiq::step(session->model->model, session->state, action, session->rng);
        session->state = result.next;
        json out{{"state", guiq::gui_state_to_json(result.next)},
                 {"covered", result.covered},
                 {"exited", result.exited}};
        *out_result_json = dup_string(out.dump());
    });
}

void guiq_session_close(guiq_session* session) { delete session; }

guiq_status guiq_run_train(const char* spec_json, const char* out_dir) {
    return guarded([&] {
        require(out_dir, "out_dir");
        guiq::cmd_train(parse_spec(spec_json), out_dir);
    });
}

guiq_status guiq_run_evaluate(const char* spec_json, const char* checkpoint_path,
                              const char* out_dir) {
    return guarded([&] {
        require(checkpoint_path && out_dir, "checkpoint_path/out_dir");
        guiq::cmd_evaluate(parse_spec(spec_json), checkpoint_path, out_dir);
    });
}

guiq_status guiq_run_commit_eval(const char* spec_json, const char* checkpoint_path,
                                 const char* out_dir) {
    return guarded([&] {
        require(out_dir, "out_dir");
        guiq::cmd_commit_eval(parse_spec(spec_json),
                              checkpoint_path ? checkpoint_path : "", out_dir);
    });
}

guiq_status guiq_run_baseline(const char* spec_json, const char* out_dir) {
    return guarded([&] {
        require(out_dir, "out_dir");
        guiq::cmd_baseline_random(parse_spec(spec_json), out_dir);
    });
}

guiq_status guiq_run_report(const char* const* run_dirs, size_t run_dir_count,
                            const char* out_dir) {
    return guarded([&] {
        require(run_dirs && out_dir, "run_dirs/out_dir");
        std::vector<std::filesystem::path> dirs;
        for (size_t i = 0; i < run_dir_count; ++i) {
            require(run_dirs[i], "run_dirs[i]");
            dirs.emplace_back(run_dirs[i]);
        }
        guiq::cmd_report(dirs, out_dir);
    });
}

guiq_status guiq_run_replay(const char* manifest_path, const char* out_dir, int* out_identical) {
    return guarded([&] {
        require(manifest_path && out_dir && out_identical, "manifest_path/out_dir/out_identical");
        *out_identical = guiq::cmd_replay(manifest_path, out_dir) ? 1 : 0;
    });
}

} // extern "C"
