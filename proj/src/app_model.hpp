#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace guiq {

using FunctionId = std::uint32_t;

/// Event kinds a widget (or the screen itself, for `back`) can receive.
/// Enum order equals lexicographic order of the wire names, so the enum
/// value doubles as the one-hot slot and the enumeration sort key.
enum class EventKind : int {
    back = 0,
    click = 1,
    long_click = 2,
    scroll = 3,
    text_input = 4,
};
inline constexpr int kEventKindCount = 5;

std::string_view event_kind_name(EventKind kind);
std::optional<EventKind> event_kind_from_name(std::string_view name);

/// Function id <-> signature registry, plus named changed-function sets
/// ("commits") used as directed-testing targets.
struct FunctionTable {
    std::map<FunctionId, std::string> entries;
    std::map<std::string, std::vector<FunctionId>> changed_sets;

    bool contains(FunctionId id) const { return entries.count(id) != 0; }
    const std::string& signature(FunctionId id) const;
    std::vector<FunctionId> ids() const;
};

struct Widget {
    std::string widget_class;
    std::string resource_id;
    std::string text;
    std::array<int, 4> bounds{0, 0, 0, 0}; // left, top, right, bottom (px)
    std::vector<EventKind> supported_events;
};

struct Screen {
    std::string screen_id;
    std::string activity;
    int width = 1080;
    int height = 1920;
    std::vector<Widget> widgets;
};

/// One concrete GUI event. `widget_index` is absent for screen-level events
/// (back); `payload` is only meaningful for text_input.
struct ActionSpec {
    EventKind event = EventKind::back;
    std::optional<int> widget_index;
    std::optional<std::string> payload;

    bool operator==(const ActionSpec&) const = default;
};

ActionSpec back_action();
ActionSpec widget_action(EventKind event, int widget_index,
                         std::optional<std::string> payload = std::nullopt);
std::string action_to_string(const ActionSpec& action);

/// Transition target name reserved for "the app exits"; the simulator
/// relaunches at the entry screen when an outcome lands here.
inline constexpr std::string_view kExitTarget = "EXIT";

struct Outcome {
    std::int64_t prob_num = 1;
    std::int64_t prob_den = 1;
    std::string to_screen; // screen id or kExitTarget
    std::vector<FunctionId> covered; // sorted, unique

    double probability() const {
        return static_cast<double>(prob_num) / static_cast<double>(prob_den);
    }
    bool is_exit() const { return to_screen == kExitTarget; }
};

struct Transition {
    std::string from_screen;
    ActionSpec action;
    std::vector<Outcome> outcomes;
};

/// Observable GUI state: a screen snapshot. Matches its Screen except for
/// dynamic text (text_input updates the snapshot, not the model).
struct GuiState {
    std::string screen_id;
    std::string activity;
    std::vector<Widget> widgets;
};

class AppModel {
public:
    std::string name;
    std::string version;
    std::string entry_screen;
    std::vector<Screen> screens;
    std::vector<Transition> transitions;
    FunctionTable functions;

    /// Rebuild the screen/transition lookup indexes. Called by load/generate;
    /// call again after mutating the public fields by hand.
    void reindex();

    bool has_screen(const std::string& id) const;
    const Screen& screen(const std::string& id) const;

    /// Transition declared for (screen, action), or nullptr for inert pairs.
    /// A transition whose action has no payload acts as a wildcard for any
    /// payload; an exact payload match wins over the wildcard.
    const Transition* find_transition(const std::string& screen_id,
                                      const ActionSpec& action) const;

private:
    std::map<std::string, std::size_t> screen_index_;
    // (screen, event, widget, payload-or-"") -> transition index
    std::map<std::string, std::size_t> transition_index_;
};

// ---- load / save ----------------------------------------------------------

AppModel load_app_model(const std::filesystem::path& path);
AppModel parse_app_model(const nlohmann::json& doc);
nlohmann::json app_model_to_json(const AppModel& model);
void save_app_model(const AppModel& model, const std::filesystem::path& path);

/// Checks every model invariant; throws Errc::validation naming the first
/// violation. Unreachable screens are reported through `warnings` only.
void validate_app_model(const AppModel& model,
                        std::vector<std::string>* warnings = nullptr);

/// Stable content hash of the canonical JSON form.
std::uint64_t model_fingerprint(const AppModel& model);

// ---- execution -------------------------------------------------------------

GuiState state_for_screen(const AppModel& model, const std::string& screen_id);
GuiState initial_state(const AppModel& model);

/// Actions available on a state, in deterministic order: widget index
/// ascending, event name lexicographic within a widget, then back.
std::vector<ActionSpec> enumerate_actions(const GuiState& state);
std::vector<ActionSpec> enumerate_actions(const AppModel& model, const GuiState& state);

struct StepResult {
    GuiState next;
    std::vector<FunctionId> covered; // sorted, unique
    bool exited = false;
};

/// Execute one action. Undeclared (state, action) pairs are inert self-loops;
/// EXIT outcomes relaunch at the entry screen with exited=true.
StepResult step(const AppModel& model, const GuiState& state,
                const ActionSpec& action, Rng& rng);

// ---- synthetic app generator ----------------------------------------------

struct GeneratorSpec {
    std::string name = "synthetic";
    int n_screens = 20;
    int n_functions = 60;
    int branching = 3; // widget-driven transitions per screen
    double noop_fraction = 0.25;
    double exit_fraction = 0.05;
    std::uint64_t seed = 0;
    int n_changed_sets = 5;
};

GeneratorSpec generator_spec_from_json(const nlohmann::json& doc);
nlohmann::json generator_spec_to_json(const GeneratorSpec& spec);

/// Deterministic synthetic app: every screen reachable from the entry, every
/// function attached to at least one outcome.
AppModel generate_synthetic_app(const GeneratorSpec& spec);

// ---- trigger-distance oracle ------------------------------------------------

struct WitnessStep {
    std::string screen;
    ActionSpec action;
    std::size_t outcome_index;
};

/// Minimal number of actions from the entry screen until some outcome path
/// covers `id`, treating every declared outcome as traversable.
/// nullopt = unreachable.
std::optional<int> shortest_trigger_distance(const AppModel& model, FunctionId id);

/// The BFS path behind shortest_trigger_distance, for replay checks.
std::optional<std::vector<WitnessStep>> shortest_trigger_witness(const AppModel& model,
                                                                 FunctionId id);

// ---- json helpers shared with the wire layer --------------------------------

nlohmann::json action_to_json(const ActionSpec& action);
ActionSpec action_from_json(const nlohmann::json& doc);
nlohmann::json gui_state_to_json(const GuiState& state);
GuiState gui_state_from_json(const nlohmann::json& doc);

} // namespace guiq
