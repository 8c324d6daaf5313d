#include "app_model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace guiq {

using nlohmann::json;

namespace {

const std::array<std::string_view, kEventKindCount> kEventNames = {
    "back", "click", "long_click", "scroll", "text_input"};

std::string transition_key(const std::string& screen_id, const ActionSpec& action,
                           bool wildcard_payload) {
    std::string key = screen_id;
    key += '\x1f';
    key += event_kind_name(action.event);
    key += '\x1f';
    key += action.widget_index ? std::to_string(*action.widget_index) : std::string("-");
    key += '\x1f';
    if (!wildcard_payload && action.payload) {
        key += 'P';
        key += *action.payload;
    } else {
        key += '*';
    }
    return key;
}

// Exact rational accumulator for the sum-to-one check.
struct Rational {
    __int128 num = 0;
    __int128 den = 1;

    void add(std::int64_t n, std::int64_t d) {
        num = num * d + den * n;
        den *= d;
        __int128 g = gcd128(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }
    bool is_one() const { return num == den; }

    static __int128 gcd128(__int128 a, __int128 b) {
        while (b != 0) {
            __int128 t = a % b;
            a = b;
            b = t;
        }
        return a == 0 ? 1 : a;
    }
};

std::vector<FunctionId> sorted_unique(std::vector<FunctionId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

} // namespace

std::string_view event_kind_name(EventKind kind) {
    return kEventNames[static_cast<std::size_t>(kind)];
}

std::optional<EventKind> event_kind_from_name(std::string_view name) {
    for (int i = 0; i < kEventKindCount; ++i) {
        if (kEventNames[static_cast<std::size_t>(i)] == name) {
            return static_cast<EventKind>(i);
        }
    }
    return std::nullopt;
}

const std::string& FunctionTable::signature(FunctionId id) const {
    auto it = entries.find(id);
    if (it == entries.end()) {
        throw Error(Errc::invalid_arg, "unknown function id " + std::to_string(id));
    }
    return it->second;
}

std::vector<FunctionId> FunctionTable::ids() const {
    std::vector<FunctionId> out;
    out.reserve(entries.size());
    for (const auto& [id, sig] : entries) {
        out.push_back(id);
    }
    return out;
}

ActionSpec back_action() { return ActionSpec{EventKind::back, std::nullopt, std::nullopt}; }

ActionSpec widget_action(EventKind event, int widget_index, std::optional<std::string> payload) {
    return ActionSpec{event, widget_index, std::move(payload)};
}

std::string action_to_string(const ActionSpec& action) {
    std::string out(event_kind_name(action.event));
    if (action.widget_index) {
        out += "(w" + std::to_string(*action.widget_index);
        if (action.payload) {
            out += ",\"" + *action.payload + "\"";
        }
        out += ")";
    }
    return out;
}

void AppModel::reindex() {
    screen_index_.clear();
    transition_index_.clear();
    for (std::size_t i = 0; i < screens.size(); ++i) {
        screen_index_.emplace(screens[i].screen_id, i);
    }
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        const Transition& t = transitions[i];
        bool wildcard = !t.action.payload.has_value();
        transition_index_.emplace(transition_key(t.from_screen, t.action, wildcard), i);
    }
}

bool AppModel::has_screen(const std::string& id) const {
    return screen_index_.count(id) != 0;
}

const Screen& AppModel::screen(const std::string& id) const {
    auto it = screen_index_.find(id);
    if (it == screen_index_.end()) {
        throw Error(Errc::invalid_arg, "unknown screen \"" + id + "\"");
    }
    return screens[it->second];
}

const Transition* AppModel::find_transition(const std::string& screen_id,
                                            const ActionSpec& action) const {
    if (action.payload) {
        auto it = transition_index_.find(transition_key(screen_id, action, false));
        if (it != transition_index_.end()) {
            return &transitions[it->second];
        }
    }
    auto it = transition_index_.find(transition_key(screen_id, action, true));
    if (it != transition_index_.end()) {
        return &transitions[it->second];
    }
    return nullptr;
}

// ---- json ------------------------------------------------------------------

json action_to_json(const ActionSpec& action) {
    json doc;
    doc["event"] = std::string(event_kind_name(action.event));
    if (action.widget_index) {
        doc["widget"] = *action.widget_index;
    }
    if (action.payload) {
        doc["payload"] = *action.payload;
    }
    return doc;
}

ActionSpec action_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("event")) {
        throw_parse("action must be an object with an \"event\" key");
    }
    auto kind = event_kind_from_name(doc.at("event").get<std::string>());
    if (!kind) {
        throw_parse("unknown event kind \"" + doc.at("event").get<std::string>() + "\"");
    }
    ActionSpec action;
    action.event = *kind;
    if (doc.contains("widget")) {
        action.widget_index = doc.at("widget").get<int>();
    }
    if (doc.contains("payload")) {
        action.payload = doc.at("payload").get<std::string>();
    }
    return action;
}

namespace {

json widget_to_json(const Widget& w) {
    json events = json::array();
    for (EventKind e : w.supported_events) {
        events.push_back(std::string(event_kind_name(e)));
    }
    return json{{"class", w.widget_class},
                {"resource_id", w.resource_id},
                {"text", w.text},
                {"bounds", w.bounds},
                {"events", events}};
}

Widget widget_from_json(const json& doc) {
    Widget w;
    w.widget_class = doc.at("class").get<std::string>();
    w.resource_id = doc.at("resource_id").get<std::string>();
    w.text = doc.value("text", std::string{});
    auto b = doc.at("bounds");
    if (!b.is_array() || b.size() != 4) {
        throw_parse("widget bounds must be an array of 4 integers");
    }
    for (int i = 0; i < 4; ++i) {
        w.bounds[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)].get<int>();
    }
    for (const auto& e : doc.at("events")) {
        auto kind = event_kind_from_name(e.get<std::string>());
        if (!kind) {
            throw_parse("unknown event kind \"" + e.get<std::string>() + "\"");
        }
        w.supported_events.push_back(*kind);
    }
    return w;
}

} // namespace

json gui_state_to_json(const GuiState& state) {
    json widgets = json::array();
    for (const Widget& w : state.widgets) {
        widgets.push_back(widget_to_json(w));
    }
    return json{{"screen_id", state.screen_id},
                {"activity", state.activity},
                {"widgets", widgets}};
}

GuiState gui_state_from_json(const json& doc) {
    GuiState state;
    state.screen_id = doc.at("screen_id").get<std::string>();
    state.activity = doc.at("activity").get<std::string>();
    for (const auto& w : doc.at("widgets")) {
        state.widgets.push_back(widget_from_json(w));
    }
    return state;
}

AppModel parse_app_model(const json& doc) {
    if (!doc.is_object()) {
        throw_parse("app model document must be a JSON object");
    }
    AppModel model;
    try {
        model.name = doc.at("name").get<std::string>();
        model.version = doc.value("version", std::string("0"));
        model.entry_screen = doc.at("entry").get<std::string>();
        for (const auto& s : doc.at("screens")) {
            Screen screen;
            screen.screen_id = s.at("id").get<std::string>();
            screen.activity = s.at("activity").get<std::string>();
            screen.width = s.value("width", 1080);
            screen.height = s.value("height", 1920);
            if (s.contains("widgets")) {
                for (const auto& w : s.at("widgets")) {
                    screen.widgets.push_back(widget_from_json(w));
                }
            }
            model.screens.push_back(std::move(screen));
        }
        for (const auto& t : doc.at("transitions")) {
            Transition tr;
            tr.from_screen = t.at("from").get<std::string>();
            tr.action = action_from_json(t.at("action"));
            for (const auto& o : t.at("outcomes")) {
                Outcome outcome;
                outcome.prob_num = o.at("p").at("num").get<std::int64_t>();
                outcome.prob_den = o.at("p").at("den").get<std::int64_t>();
                outcome.to_screen = o.at("to").get<std::string>();
                for (const auto& f : o.at("covers")) {
                    outcome.covered.push_back(f.get<FunctionId>());
                }
                outcome.covered = sorted_unique(std::move(outcome.covered));
                tr.outcomes.push_back(std::move(outcome));
            }
            model.transitions.push_back(std::move(tr));
        }
        for (const auto& [key, value] : doc.at("functions").items()) {
            std::size_t pos = 0;
            unsigned long id = std::stoul(key, &pos);
            if (pos != key.size()) {
                throw_parse("function id \"" + key + "\" is not an integer");
            }
            if (!model.functions.entries.emplace(static_cast<FunctionId>(id),
                                                 value.get<std::string>()).second) {
                throw_parse("duplicate function id " + key);
            }
        }
        if (doc.contains("changed_sets")) {
            for (const auto& [name, members] : doc.at("changed_sets").items()) {
                std::vector<FunctionId> ids;
                for (const auto& m : members) {
                    ids.push_back(m.get<FunctionId>());
                }
                model.functions.changed_sets.emplace(name, std::move(ids));
            }
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw_parse(std::string("malformed app model: ") + e.what());
    }
    model.reindex();
    validate_app_model(model);
    return model;
}

AppModel load_app_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw_io("cannot open app model file: " + path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw_parse(std::string("invalid JSON in ") + path.string() + ": " + e.what());
    }
    return parse_app_model(doc);
}

json app_model_to_json(const AppModel& model) {
    json screens = json::array();
    for (const Screen& s : model.screens) {
        json widgets = json::array();
        for (const Widget& w : s.widgets) {
            widgets.push_back(widget_to_json(w));
        }
        screens.push_back(json{{"id", s.screen_id},
                               {"activity", s.activity},
                               {"width", s.width},
                               {"height", s.height},
                               {"widgets", widgets}});
    }
    json transitions = json::array();
    for (const Transition& t : model.transitions) {
        json outcomes = json::array();
        for (const Outcome& o : t.outcomes) {
            outcomes.push_back(json{{"p", {{"num", o.prob_num}, {"den", o.prob_den}}},
                                    {"to", o.to_screen},
                                    {"covers", o.covered}});
        }
        transitions.push_back(json{{"from", t.from_screen},
                                   {"action", action_to_json(t.action)},
                                   {"outcomes", outcomes}});
    }
    json functions = json::object();
    for (const auto& [id, sig] : model.functions.entries) {
        functions[std::to_string(id)] = sig;
    }
    json changed = json::object();
    for (const auto& [name, ids] : model.functions.changed_sets) {
        changed[name] = ids;
    }
    return json{{"name", model.name},
                {"version", model.version},
                {"entry", model.entry_screen},
                {"screens", screens},
                {"transitions", transitions},
                {"functions", functions},
                {"changed_sets", changed}};
}

void save_app_model(const AppModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw_io("cannot write app model file: " + path.string());
    }
    out << app_model_to_json(model).dump(2) << "\n";
}

std::uint64_t model_fingerprint(const AppModel& model) {
    return hash64(app_model_to_json(model).dump());
}

// ---- validation --------------------------------------------------------------

namespace {

bool action_valid_on(const Screen& screen, const ActionSpec& action, std::string* why) {
    if (action.event == EventKind::back) {
        if (action.widget_index) {
            if (why) *why = "back action must not target a widget";
            return false;
        }
        return true;
    }
    if (!action.widget_index) {
        if (why) *why = std::string(event_kind_name(action.event)) + " action requires a widget index";
        return false;
    }
    int idx = *action.widget_index;
    if (idx < 0 || static_cast<std::size_t>(idx) >= screen.widgets.size()) {
        if (why) *why = "widget index " + std::to_string(idx) + " out of range on screen \"" + screen.screen_id + "\"";
        return false;
    }
    const Widget& w = screen.widgets[static_cast<std::size_t>(idx)];
    if (std::find(w.supported_events.begin(), w.supported_events.end(), action.event) ==
        w.supported_events.end()) {
        if (why) {
            *why = "widget " + std::to_string(idx) + " on screen \"" + screen.screen_id +
                   "\" does not support " + std::string(event_kind_name(action.event));
        }
        return false;
    }
    return true;
}

} // namespace

void validate_app_model(const AppModel& model, std::vector<std::string>* warnings) {
    if (model.entry_screen.empty()) {
        throw_validation("entry screen must be set");
    }
    std::set<std::string> seen_ids;
    for (const Screen& s : model.screens) {
        if (s.screen_id == kExitTarget) {
            throw_validation("screen id \"EXIT\" is reserved");
        }
        if (!seen_ids.insert(s.screen_id).second) {
            throw_validation("duplicate screen id \"" + s.screen_id + "\"");
        }
        for (std::size_t wi = 0; wi < s.widgets.size(); ++wi) {
            const Widget& w = s.widgets[wi];
            const auto& b = w.bounds;
            if (b[0] >= b[2] || b[1] >= b[3]) {
                throw_validation("widget " + std::to_string(wi) + " on screen \"" + s.screen_id +
                                 "\" has ill-ordered bounds");
            }
            if (b[0] < 0 || b[1] < 0 || b[2] > s.width || b[3] > s.height) {
                throw_validation("widget " + std::to_string(wi) + " on screen \"" + s.screen_id +
                                 "\" lies outside the declared screen dimensions");
            }
            if (w.supported_events.empty()) {
                throw_validation("widget " + std::to_string(wi) + " on screen \"" + s.screen_id +
                                 "\" supports no events");
            }
            for (EventKind e : w.supported_events) {
                if (e == EventKind::back) {
                    throw_validation("widget " + std::to_string(wi) + " on screen \"" + s.screen_id +
                                     "\" declares the screen-level event back");
                }
            }
        }
    }
    if (!model.has_screen(model.entry_screen)) {
        throw_validation("entry screen \"" + model.entry_screen + "\" is not declared");
    }
    for (const auto& [name, ids] : model.functions.changed_sets) {
        for (FunctionId id : ids) {
            if (!model.functions.contains(id)) {
                throw_validation("changed set \"" + name + "\" references unknown function " +
                                 std::to_string(id));
            }
        }
    }
    std::set<std::string> transition_keys;
    for (std::size_t ti = 0; ti < model.transitions.size(); ++ti) {
        const Transition& t = model.transitions[ti];
        if (!model.has_screen(t.from_screen)) {
            throw_validation("transition " + std::to_string(ti) + " starts at undeclared screen \"" +
                             t.from_screen + "\"");
        }
        std::string why;
        if (!action_valid_on(model.screen(t.from_screen), t.action, &why)) {
            throw_validation("transition " + std::to_string(ti) + ": " + why);
        }
        std::string key = t.from_screen + '\x1f' + std::string(event_kind_name(t.action.event)) +
                          '\x1f' + (t.action.widget_index ? std::to_string(*t.action.widget_index) : "-") +
                          '\x1f' + (t.action.payload ? "P" + *t.action.payload : std::string("*"));
        if (!transition_keys.insert(key).second) {
            throw_validation("duplicate transition for " + action_to_string(t.action) +
                             " on screen \"" + t.from_screen + "\"");
        }
        if (t.outcomes.empty()) {
            throw_validation("transition " + std::to_string(ti) + " has no outcomes");
        }
        Rational sum;
        for (const Outcome& o : t.outcomes) {
            if (o.prob_den <= 0 || o.prob_num <= 0 || o.prob_num > o.prob_den) {
                throw_validation("transition " + std::to_string(ti) +
                                 " has an outcome probability outside (0,1]");
            }
            sum.add(o.prob_num, o.prob_den);
            if (!o.is_exit() && !model.has_screen(o.to_screen)) {
                throw_validation("transition " + std::to_string(ti) +
                                 " targets undeclared screen \"" + o.to_screen + "\"");
            }
            for (FunctionId f : o.covered) {
                if (!model.functions.contains(f)) {
                    throw_validation("transition " + std::to_string(ti) +
                                     " covers unknown function " + std::to_string(f));
                }
            }
        }
        if (!sum.is_one()) {
            throw_validation("transition " + std::to_string(ti) +
                             " outcome probabilities do not sum to 1");
        }
    }
    if (warnings) {
        std::set<std::string> reachable;
        std::deque<std::string> queue{model.entry_screen};
        reachable.insert(model.entry_screen);
        while (!queue.empty()) {
            std::string cur = queue.front();
            queue.pop_front();
            for (const Transition& t : model.transitions) {
                if (t.from_screen != cur) continue;
                for (const Outcome& o : t.outcomes) {
                    std::string next = o.is_exit() ? model.entry_screen : o.to_screen;
                    if (reachable.insert(next).second) {
                        queue.push_back(next);
                    }
                }
            }
        }
        for (const Screen& s : model.screens) {
            if (reachable.count(s.screen_id) == 0) {
                warnings->push_back("screen \"" + s.screen_id + "\" is unreachable from the entry");
            }
        }
    }
}

// ---- execution ----------------------------------------------------------------

GuiState state_for_screen(const AppModel& model, const std::string& screen_id) {
    const Screen& s = model.screen(screen_id);
    return GuiState{s.screen_id, s.activity, s.widgets};
}

GuiState initial_state(const AppModel& model) {
    return state_for_screen(model, model.entry_screen);
}

std::vector<ActionSpec> enumerate_actions(const GuiState& state) {
    std::vector<ActionSpec> out;
    for (std::size_t wi = 0; wi < state.widgets.size(); ++wi) {
        std::vector<EventKind> events = state.widgets[wi].supported_events;
        std::sort(events.begin(), events.end()); // enum order == name order
        events.erase(std::unique(events.begin(), events.end()), events.end());
        for (EventKind e : events) {
            out.push_back(widget_action(e, static_cast<int>(wi)));
        }
    }
    out.push_back(back_action());
    return out;
}

std::vector<ActionSpec> enumerate_actions(const AppModel& model, const GuiState& state) {
    if (!model.has_screen(state.screen_id)) {
        throw Error(Errc::invalid_arg, "unknown screen \"" + state.screen_id + "\"");
    }
    return enumerate_actions(state);
}

StepResult step(const AppModel& model, const GuiState& state, const ActionSpec& action,
                Rng& rng) {
    auto candidates = enumerate_actions(model, state);
    auto match = [&](const ActionSpec& c) {
        return c.event == action.event && c.widget_index == action.widget_index;
    };
    if (std::find_if(candidates.begin(), candidates.end(), match) == candidates.end()) {
        throw Error(Errc::invalid_arg,
                    "action " + action_to_string(action) + " is not available on screen \"" +
                        state.screen_id + "\"");
    }

    const Transition* transition = model.find_transition(state.screen_id, action);
    if (transition == nullptr) {
        // Inert widget: nothing declared for this pair.
        return StepResult{state, {}, false};
    }

    const Outcome* chosen = &transition->outcomes.back();
    double u = rng_unit(rng);
    double acc = 0.0;
    for (const Outcome& o : transition->outcomes) {
        acc += o.probability();
        if (u < acc) {
            chosen = &o;
            break;
        }
    }

    StepResult result;
    result.covered = chosen->covered;
    if (chosen->is_exit()) {
        result.next = initial_state(model);
        result.exited = true;
        return result;
    }
    if (chosen->to_screen == state.screen_id) {
        // Stay on the current snapshot; text_input leaves its payload behind
        // as dynamic text.
        result.next = state;
        if (action.event == EventKind::text_input && action.widget_index) {
            result.next.widgets[static_cast<std::size_t>(*action.widget_index)].text =
                action.payload.value_or("input");
        }
        return result;
    }
    result.next = state_for_screen(model, chosen->to_screen);
    return result;
}

// ---- trigger-distance oracle ----------------------------------------------------

namespace {

struct BfsHit {
    int distance = -1;
    std::vector<WitnessStep> witness;
};

std::optional<BfsHit> bfs_trigger(const AppModel& model, FunctionId id) {
    if (!model.functions.contains(id)) {
        throw Error(Errc::invalid_arg, "unknown function id " + std::to_string(id));
    }
    struct Arrival {
        int dist = 0;
        std::string prev_screen;
        std::size_t via_transition = 0;
        std::size_t via_outcome = 0;
        bool has_prev = false;
    };
    std::map<std::string, Arrival> visited;
    visited[model.entry_screen] = Arrival{};
    std::deque<std::string> queue{model.entry_screen};

    auto build_witness = [&](const std::string& last_screen, std::size_t ti, std::size_t oi) {
        std::vector<WitnessStep> path;
        path.push_back(WitnessStep{last_screen, model.transitions[ti].action, oi});
        std::string cur = last_screen;
        while (visited[cur].has_prev) {
            const Arrival& a = visited[cur];
            path.push_back(WitnessStep{a.prev_screen, model.transitions[a.via_transition].action,
                                       a.via_outcome});
            cur = a.prev_screen;
        }
        std::reverse(path.begin(), path.end());
        return path;
    };

    while (!queue.empty()) {
        std::string cur = queue.front();
        queue.pop_front();
        int dist = visited[cur].dist;
        for (std::size_t ti = 0; ti < model.transitions.size(); ++ti) {
            const Transition& t = model.transitions[ti];
            if (t.from_screen != cur) continue;
            for (std::size_t oi = 0; oi < t.outcomes.size(); ++oi) {
                const Outcome& o = t.outcomes[oi];
                if (std::binary_search(o.covered.begin(), o.covered.end(), id)) {
                    BfsHit hit;
                    hit.distance = dist + 1;
                    hit.witness = build_witness(cur, ti, oi);
                    return hit;
                }
                std::string next = o.is_exit() ? model.entry_screen : o.to_screen;
                if (visited.count(next) == 0) {
                    visited[next] = Arrival{dist + 1, cur, ti, oi, true};
                    queue.push_back(next);
                }
            }
        }
    }
    return std::nullopt;
}

} // namespace

std::optional<int> shortest_trigger_distance(const AppModel& model, FunctionId id) {
    auto hit = bfs_trigger(model, id);
    if (!hit) return std::nullopt;
    return hit->distance;
}

std::optional<std::vector<WitnessStep>> shortest_trigger_witness(const AppModel& model,
                                                                 FunctionId id) {
    auto hit = bfs_trigger(model, id);
    if (!hit) return std::nullopt;
    return hit->witness;
}

// ---- generator --------------------------------------------------------------------

GeneratorSpec generator_spec_from_json(const json& doc) {
    GeneratorSpec spec;
    spec.name = doc.value("name", spec.name);
    spec.n_screens = doc.value("n_screens", spec.n_screens);
    spec.n_functions = doc.value("n_functions", spec.n_functions);
    spec.branching = doc.value("branching", spec.branching);
    spec.noop_fraction = doc.value("noop_fraction", spec.noop_fraction);
    spec.exit_fraction = doc.value("exit_fraction", spec.exit_fraction);
    spec.seed = doc.value("seed", spec.seed);
    spec.n_changed_sets = doc.value("n_changed_sets", spec.n_changed_sets);
    return spec;
}

json generator_spec_to_json(const GeneratorSpec& spec) {
    return json{{"name", spec.name},
                {"n_screens", spec.n_screens},
                {"n_functions", spec.n_functions},
                {"branching", spec.branching},
                {"noop_fraction", spec.noop_fraction},
                {"exit_fraction", spec.exit_fraction},
                {"seed", spec.seed},
                {"n_changed_sets", spec.n_changed_sets}};
}

namespace {

const std::array<std::string_view, 6> kWidgetClasses = {
    "Button", "TextView", "EditText", "ImageButton", "ListView", "CheckBox"};

EventKind primary_event_for_class(std::string_view cls) {
    if (cls == "EditText") return EventKind::text_input;
    if (cls == "ListView") return EventKind::scroll;
    return EventKind::click;
}

std::string listener_prefix(EventKind e) {
    switch (e) {
        case EventKind::click: return "onClick";
        case EventKind::long_click: return "onLongClick";
        case EventKind::scroll: return "onScroll";
        case EventKind::text_input: return "onTextChanged";
        case EventKind::back: return "onBackPressed";
    }
    return "onEvent";
}

} // namespace

AppModel generate_synthetic_app(const GeneratorSpec& spec) {
    if (spec.n_screens < 1) {
        throw Error(Errc::invalid_arg, "generator requires n_screens >= 1");
    }
    if (spec.branching < 1) {
        throw Error(Errc::invalid_arg, "generator requires branching >= 1");
    }
    if (spec.n_functions < 1) {
        throw Error(Errc::invalid_arg, "generator requires n_functions >= 1");
    }
    if (spec.noop_fraction < 0.0 || spec.noop_fraction >= 1.0 || spec.exit_fraction < 0.0 ||
        spec.exit_fraction >= 1.0) {
        throw Error(Errc::invalid_arg, "generator fractions must lie in [0,1)");
    }

    const int n = spec.n_screens;
    Rng rng = make_rng(spec.seed);

    // Spanning structure: each screen (except the entry) hangs off an earlier
    // screen within a short window, which keeps the graph deep rather than flat.
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    for (int i = 1; i < n; ++i) {
        int lo = std::max(0, i - 8);
        parent[static_cast<std::size_t>(i)] =
            lo + static_cast<int>(rng_below(rng, static_cast<std::size_t>(i - lo)));
    }

    struct Edge {
        int from;
        int to; // -1 for EXIT
        bool tree;
    };
    std::vector<Edge> edges;
    for (int i = 1; i < n; ++i) {
        edges.push_back(Edge{parent[static_cast<std::size_t>(i)], i, true});
    }
    std::vector<int> out_degree(static_cast<std::size_t>(n), 0);
    for (const Edge& e : edges) {
        ++out_degree[static_cast<std::size_t>(e.from)];
    }
    for (int s = 0; s < n; ++s) {
        while (out_degree[static_cast<std::size_t>(s)] < spec.branching) {
            Edge e{s, 0, false};
            if (rng_unit(rng) < spec.exit_fraction) {
                e.to = -1;
            } else {
                e.to = static_cast<int>(rng_below(rng, static_cast<std::size_t>(n)));
            }
            edges.push_back(e);
            ++out_degree[static_cast<std::size_t>(s)];
        }
    }

    // Widgets per screen: enough action slots for this screen's edges plus a
    // proportional share of inert slots.
    constexpr int kMaxWidgets = 14;
    AppModel model;
    model.name = spec.name;
    model.version = "1";
    model.entry_screen = "S0";

    std::vector<std::vector<std::pair<int, EventKind>>> slots(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        int need = out_degree[static_cast<std::size_t>(s)];
        int target_slots = need;
        if (spec.noop_fraction > 0.0) {
            target_slots = static_cast<int>(
                std::ceil(static_cast<double>(need) / (1.0 - spec.noop_fraction)));
        }
        Screen screen;
        screen.screen_id = "S" + std::to_string(s);
        screen.activity = "com.synth." + spec.name + ".Screen" + std::to_string(s) + "Activity";
        int made_slots = 0;
        int row = 0;
        while (made_slots < target_slots) {
            if (static_cast<int>(screen.widgets.size()) >= kMaxWidgets) {
                if (made_slots < need) {
                    throw Error(Errc::invalid_arg,
                                "generator spec infeasible: branching " +
                                    std::to_string(spec.branching) +
                                    " exceeds the action slots available on a screen");
                }
                break;
            }
            Widget w;
            std::string_view cls = kWidgetClasses[rng_below(rng, kWidgetClasses.size())];
            w.widget_class = std::string(cls);
            w.resource_id = "w" + std::to_string(s) + "_" + std::to_string(screen.widgets.size());
            if (rng_unit(rng) < 0.3) {
                w.text = "label" + std::to_string(rng_below(rng, 50));
            }
            int top = 8 + 120 * row;
            w.bounds = {16, top, 1064, top + 104};
            row = (row + 1) % 15;
            w.supported_events.push_back(primary_event_for_class(cls));
            if (rng_unit(rng) < 0.4) {
                EventKind extra = (cls == "ListView") ? EventKind::click : EventKind::long_click;
                if (extra != w.supported_events.front()) {
                    w.supported_events.push_back(extra);
                }
            }
            made_slots += static_cast<int>(w.supported_events.size());
            screen.widgets.push_back(std::move(w));
        }
        auto& slot_list = slots[static_cast<std::size_t>(s)];
        for (std::size_t wi = 0; wi < screen.widgets.size(); ++wi) {
            std::vector<EventKind> ev = screen.widgets[wi].supported_events;
            std::sort(ev.begin(), ev.end());
            for (EventKind e : ev) {
                slot_list.emplace_back(static_cast<int>(wi), e);
            }
        }
        // Fisher-Yates so the inert slots are not biased toward the last widgets.
        for (std::size_t i = slot_list.size(); i > 1; --i) {
            std::swap(slot_list[i - 1], slot_list[rng_below(rng, i)]);
        }
        model.screens.push_back(std::move(screen));
    }
    model.reindex(); // screen lookups are needed while wiring transitions

    // Materialize edges as transitions, occasionally stochastic.
    std::vector<int> next_slot(static_cast<std::size_t>(n), 0);
    for (const Edge& e : edges) {
        auto& slot_list = slots[static_cast<std::size_t>(e.from)];
        int si = next_slot[static_cast<std::size_t>(e.from)]++;
        if (si >= static_cast<int>(slot_list.size())) {
            throw Error(Errc::invalid_arg, "generator spec infeasible: ran out of action slots");
        }
        auto [wi, ev] = slot_list[static_cast<std::size_t>(si)];
        Transition t;
        t.from_screen = "S" + std::to_string(e.from);
        t.action = widget_action(ev, wi);
        std::string to = e.to < 0 ? std::string(kExitTarget) : "S" + std::to_string(e.to);
        if (!e.tree && e.to >= 0 && rng_unit(rng) < 0.15) {
            int alt = static_cast<int>(rng_below(rng, static_cast<std::size_t>(n)));
            t.outcomes.push_back(Outcome{2, 3, to, {}});
            t.outcomes.push_back(Outcome{1, 3, "S" + std::to_string(alt), {}});
        } else {
            t.outcomes.push_back(Outcome{1, 1, to, {}});
        }
        model.transitions.push_back(std::move(t));
    }

    // Back navigation: entry exits the app; other screens return to their parent.
    {
        Transition t0;
        t0.from_screen = "S0";
        t0.action = back_action();
        t0.outcomes.push_back(Outcome{1, 1, std::string(kExitTarget), {}});
        model.transitions.push_back(std::move(t0));
        for (int i = 1; i < n; ++i) {
            Transition t;
            t.from_screen = "S" + std::to_string(i);
            t.action = back_action();
            t.outcomes.push_back(
                Outcome{1, 1, "S" + std::to_string(parent[static_cast<std::size_t>(i)]), {}});
            model.transitions.push_back(std::move(t));
        }
    }

    // Attach every function to a home outcome round-robin, then name it after
    // that attachment point.
    std::vector<std::pair<std::size_t, std::size_t>> outcome_refs;
    for (std::size_t ti = 0; ti < model.transitions.size(); ++ti) {
        for (std::size_t oi = 0; oi < model.transitions[ti].outcomes.size(); ++oi) {
            outcome_refs.emplace_back(ti, oi);
        }
    }
    for (int f = 0; f < spec.n_functions; ++f) {
        auto [ti, oi] = outcome_refs[static_cast<std::size_t>(f) % outcome_refs.size()];
        Transition& t = model.transitions[ti];
        t.outcomes[oi].covered.push_back(static_cast<FunctionId>(f));
        std::string signature;
        if (f % 5 < 3) {
            std::string rid = t.action.widget_index
                                  ? model.screen(t.from_screen)
                                        .widgets[static_cast<std::size_t>(*t.action.widget_index)]
                                        .resource_id
                                  : "screen";
            signature = "com.synth." + spec.name + "." + t.from_screen + "Ui." +
                        listener_prefix(t.action.event) + "_" + rid + "_" + std::to_string(f);
        } else {
            signature = "com.synth." + spec.name + ".core.Helper" + std::to_string(f) + ".run";
        }
        model.functions.entries.emplace(static_cast<FunctionId>(f), std::move(signature));
    }
    // Secondary attachments, like shared helpers called from several places.
    for (auto& t : model.transitions) {
        for (auto& o : t.outcomes) {
            if (rng_unit(rng) < 0.25) {
                o.covered.push_back(
                    static_cast<FunctionId>(rng_below(rng, static_cast<std::size_t>(spec.n_functions))));
            }
            o.covered = sorted_unique(std::move(o.covered));
        }
    }

    // Synthetic commits: a few functions that sit close together in the graph.
    for (int c = 0; c < spec.n_changed_sets; ++c) {
        auto [ti, oi] = outcome_refs[rng_below(rng, outcome_refs.size())];
        std::vector<FunctionId> members = model.transitions[ti].outcomes[oi].covered;
        const std::string& from = model.transitions[ti].from_screen;
        for (const Transition& t : model.transitions) {
            if (t.from_screen != from) continue;
            for (const Outcome& o : t.outcomes) {
                for (FunctionId f : o.covered) {
                    if (members.size() >= 5) break;
                    if (rng_unit(rng) < 0.5) {
                        members.push_back(f);
                    }
                }
            }
        }
        members = sorted_unique(std::move(members));
        if (members.empty()) {
            members.push_back(static_cast<FunctionId>(rng_below(
                rng, static_cast<std::size_t>(spec.n_functions))));
        }
        model.functions.changed_sets.emplace("commit_" + std::to_string(c), std::move(members));
    }

    model.reindex();
    validate_app_model(model);
    return model;
}

} // namespace guiq
