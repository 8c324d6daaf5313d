#include <doctest.h>

#include <deque>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "app_model.hpp"

using namespace guiq;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = GUIQ_FIXTURE_DIR;

json minimal_model_doc() {
    return json::parse(R"({
        "name": "mini",
        "entry": "S0",
        "screens": [{"id": "S0", "activity": "Main", "widgets": []}],
        "transitions": [],
        "functions": {},
        "changed_sets": {}
    })");
}

json one_button_doc() {
    json doc = minimal_model_doc();
    doc["screens"][0]["widgets"] = json::array({json{{"class", "Button"},
                                                     {"resource_id", "b"},
                                                     {"text", ""},
                                                     {"bounds", {0, 0, 10, 10}},
                                                     {"events", {"click"}}}});
    return doc;
}

// Independent BFS over the declared screen graph (EXIT re-enters at entry).
// Used as the oracle for depth and trigger-distance checks.
std::map<std::string, int> oracle_screen_distances(const AppModel& model) {
    std::map<std::string, int> dist{{model.entry_screen, 0}};
    std::deque<std::string> queue{model.entry_screen};
    while (!queue.empty()) {
        std::string cur = queue.front();
        queue.pop_front();
        for (const Transition& t : model.transitions) {
            if (t.from_screen != cur) continue;
            for (const Outcome& o : t.outcomes) {
                std::string next = o.is_exit() ? model.entry_screen : o.to_screen;
                if (dist.count(next) == 0) {
                    dist[next] = dist[cur] + 1;
                    queue.push_back(next);
                }
            }
        }
    }
    return dist;
}

int oracle_trigger_distance(const AppModel& model, FunctionId id) {
    auto dist = oracle_screen_distances(model);
    int best = -1;
    for (const Transition& t : model.transitions) {
        auto it = dist.find(t.from_screen);
        if (it == dist.end()) continue;
        for (const Outcome& o : t.outcomes) {
            if (std::binary_search(o.covered.begin(), o.covered.end(), id)) {
                int d = it->second + 1;
                if (best < 0 || d < best) best = d;
            }
        }
    }
    return best;
}

} // namespace

TEST_CASE("load: minimal one-screen model") {
    AppModel model = parse_app_model(minimal_model_doc());
    CHECK(model.screens.size() == 1);
    CHECK(model.transitions.empty());
    CHECK(model.entry_screen == "S0");
}

TEST_CASE("load: transition to undeclared screen names the offender") {
    json doc = one_button_doc();
    doc["transitions"] = json::array({json{
        {"from", "S0"},
        {"action", {{"event", "click"}, {"widget", 0}}},
        {"outcomes", {{{"p", {{"num", 1}, {"den", 1}}}, {"to", "S9"}, {"covers", json::array()}}}}}});
    try {
        parse_app_model(doc);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::validation);
        CHECK(std::string(e.what()).find("S9") != std::string::npos);
    }
}

TEST_CASE("load: malformed document is a parse error") {
    try {
        parse_app_model(json::parse(R"({"name": "x"})"));
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::parse);
    }
}

TEST_CASE("load: probability sum must be exactly one") {
    json doc = one_button_doc();
    doc["transitions"] = json::array({json{
        {"from", "S0"},
        {"action", {{"event", "click"}, {"widget", 0}}},
        {"outcomes",
         {{{"p", {{"num", 1}, {"den", 3}}}, {"to", "S0"}, {"covers", json::array()}},
          {{"p", {{"num", 1}, {"den", 3}}}, {"to", "S0"}, {"covers", json::array()}}}}}});
    CHECK_THROWS_AS(parse_app_model(doc), Error);

    doc["transitions"][0]["outcomes"][1]["p"] = {{"num", 2}, {"den", 3}};
    CHECK_NOTHROW(parse_app_model(doc)); // 1/3 + 2/3 is exactly one
}

TEST_CASE("diary_toy fixture: counts and BFS depth") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    CHECK(model.screens.size() == 12);
    CHECK(model.transitions.size() == 30);
    CHECK(model.functions.entries.size() == 20);

    auto dist = oracle_screen_distances(model);
    CHECK(dist.size() == 12); // every screen reachable
    int depth = 0;
    for (const auto& [screen, d] : dist) {
        depth = std::max(depth, d);
    }
    CHECK(depth == 4);
}

TEST_CASE("enumerate_actions: ordering and screen-level back") {
    AppModel one = parse_app_model(one_button_doc());
    GuiState s = initial_state(one);
    auto actions = enumerate_actions(one, s);
    REQUIRE(actions.size() == 2);
    CHECK(actions[0].event == EventKind::click);
    CHECK(actions[0].widget_index == 0);
    CHECK(actions[1].event == EventKind::back);
    CHECK_FALSE(actions[1].widget_index.has_value());

    AppModel empty = parse_app_model(minimal_model_doc());
    auto only_back = enumerate_actions(empty, initial_state(empty));
    REQUIRE(only_back.size() == 1);
    CHECK(only_back[0].event == EventKind::back);
}

TEST_CASE("enumerate_actions: diary_toy main screen has 9 actions") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    auto actions = enumerate_actions(model, initial_state(model));
    CHECK(actions.size() == 9);

    // stability: repeated calls give the identical ordered list
    auto again = enumerate_actions(model, initial_state(model));
    CHECK(actions == again);

    CHECK(actions.front().event == EventKind::click);
    CHECK(actions.front().widget_index == 0);
    CHECK(actions.back().event == EventKind::back);
}

TEST_CASE("enumerate_actions: unknown screen") {
    AppModel model = parse_app_model(minimal_model_doc());
    GuiState bogus{"S9", "Main", {}};
    CHECK_THROWS_AS(enumerate_actions(model, bogus), Error);
}

TEST_CASE("step: inert widget is a self-loop") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    GuiState s = initial_state(model);
    Rng rng = make_rng(1);
    // long_click on btn_stats (widget 5) has no declared transition
    StepResult r = step(model, s, widget_action(EventKind::long_click, 5), rng);
    CHECK(r.next.screen_id == "S0");
    CHECK(r.covered.empty());
    CHECK_FALSE(r.exited);
}

TEST_CASE("step: deterministic transition returns declared coverage") {
    json doc = one_button_doc();
    doc["functions"] = {{"3", "a.b.c"}, {"7", "d.e.f"}};
    doc["screens"].push_back(json{{"id", "S1"}, {"activity", "Next"}, {"widgets", json::array()}});
    doc["transitions"] = json::array({json{{"from", "S0"},
                                           {"action", {{"event", "click"}, {"widget", 0}}},
                                           {"outcomes",
                                            {{{"p", {{"num", 1}, {"den", 1}}},
                                              {"to", "S1"},
                                              {"covers", {3, 7}}}}}}});
    AppModel model = parse_app_model(doc);
    Rng rng = make_rng(0);
    StepResult r = step(model, initial_state(model), widget_action(EventKind::click, 0), rng);
    CHECK(r.next.screen_id == "S1");
    CHECK(r.covered == std::vector<FunctionId>{3, 7});
    CHECK_FALSE(r.exited);
}

TEST_CASE("step: EXIT relaunches at the entry screen with the outcome's coverage") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    Rng rng = make_rng(3);
    StepResult r = step(model, initial_state(model), back_action(), rng);
    CHECK(r.exited);
    CHECK(r.next.screen_id == "S0");
    CHECK(r.covered == std::vector<FunctionId>{0});
}

TEST_CASE("step: stochastic outcome matches declared probabilities") {
    // Monte Carlo against the declared 1/2 split on the search screen
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    GuiState s5 = state_for_screen(model, "S5");
    ActionSpec go = widget_action(EventKind::click, 1);
    Rng rng = make_rng(42);
    int to_s2 = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        StepResult r = step(model, s5, go, rng);
        if (r.next.screen_id == "S2") ++to_s2;
    }
    double frac = static_cast<double>(to_s2) / n;
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
}

TEST_CASE("step: determinism under identical seeds") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng a = make_rng(seed);
        Rng b = make_rng(seed);
        Rng pick = make_rng(seed + 100);
        GuiState sa = initial_state(model);
        GuiState sb = initial_state(model);
        for (int i = 0; i < 200; ++i) {
            auto actions = enumerate_actions(model, sa);
            ActionSpec act = actions[rng_below(pick, actions.size())];
            StepResult ra = step(model, sa, act, a);
            StepResult rb = step(model, sb, act, b);
            CHECK(ra.next.screen_id == rb.next.screen_id);
            CHECK(ra.covered == rb.covered);
            CHECK(ra.exited == rb.exited);
            sa = ra.next;
            sb = rb.next;
        }
    }
}

TEST_CASE("step: coverage soundness and relaunch totality on a long random walk") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    Rng rng = make_rng(99);
    Rng pick = make_rng(100);
    GuiState s = initial_state(model);
    for (int i = 0; i < 5000; ++i) {
        auto actions = enumerate_actions(model, s);
        REQUIRE_FALSE(actions.empty());
        ActionSpec a = actions[rng_below(pick, actions.size())];
        const Transition* t = model.find_transition(s.screen_id, a);
        StepResult r = step(model, s, a, rng);
        if (t == nullptr) {
            CHECK(r.covered.empty());
        } else {
            bool subset_of_one = false;
            for (const Outcome& o : t->outcomes) {
                if (std::includes(o.covered.begin(), o.covered.end(), r.covered.begin(),
                                  r.covered.end())) {
                    subset_of_one = true;
                    break;
                }
            }
            CHECK(subset_of_one);
        }
        REQUIRE(model.has_screen(r.next.screen_id)); // never left without a state
        s = r.next;
    }
}

TEST_CASE("step: text_input self-loop leaves dynamic text behind") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    GuiState s1 = state_for_screen(model, "S1");
    Rng rng = make_rng(5);
    StepResult r = step(model, s1, widget_action(EventKind::text_input, 0, "hello world"), rng);
    CHECK(r.next.screen_id == "S1");
    CHECK(r.next.widgets[0].text == "hello world");
    CHECK(r.covered == std::vector<FunctionId>{8});
}

TEST_CASE("generator: identical seeds give byte-identical models") {
    GeneratorSpec spec;
    spec.n_screens = 12;
    spec.n_functions = 40;
    spec.branching = 3;
    spec.seed = 7;
    AppModel a = generate_synthetic_app(spec);
    AppModel b = generate_synthetic_app(spec);
    CHECK(app_model_to_json(a).dump() == app_model_to_json(b).dump());

    GeneratorSpec other = spec;
    other.seed = 8;
    AppModel c = generate_synthetic_app(other);
    CHECK(app_model_to_json(a).dump() != app_model_to_json(c).dump());
}

TEST_CASE("generator: single-screen app only self-loops or exits") {
    GeneratorSpec spec;
    spec.n_screens = 1;
    spec.n_functions = 5;
    spec.branching = 3;
    spec.exit_fraction = 0.3;
    spec.seed = 21;
    AppModel model = generate_synthetic_app(spec);
    for (const Transition& t : model.transitions) {
        for (const Outcome& o : t.outcomes) {
            CHECK((o.is_exit() || o.to_screen == "S0"));
        }
    }
}

TEST_CASE("generator: every function reachable from the entry (50 screens, 200 functions)") {
    GeneratorSpec spec;
    spec.n_screens = 50;
    spec.n_functions = 200;
    spec.branching = 3;
    spec.seed = 1;
    AppModel model = generate_synthetic_app(spec);
    for (const auto& [id, sig] : model.functions.entries) {
        INFO("function ", id);
        CHECK(oracle_trigger_distance(model, id) > 0);
        auto lib = shortest_trigger_distance(model, id);
        REQUIRE(lib.has_value());
        CHECK(*lib == oracle_trigger_distance(model, id));
    }
}

TEST_CASE("generator: infeasible branching is rejected") {
    GeneratorSpec spec;
    spec.n_screens = 2;
    spec.branching = 100;
    CHECK_THROWS_AS(generate_synthetic_app(spec), Error);
}

TEST_CASE("shortest_trigger_distance: entry transitions, unreachable, fixture") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    CHECK(shortest_trigger_distance(model, 1) == 1);  // on an entry-screen transition
    CHECK(shortest_trigger_distance(model, 11) == 3); // settings -> export -> csv
    CHECK(shortest_trigger_distance(model, 18) == 4);
    CHECK_THROWS_AS(shortest_trigger_distance(model, 999), Error);

    // a declared function attached to no transition is unreachable
    json doc = one_button_doc();
    doc["functions"] = {{"0", "never.covered"}};
    AppModel mini = parse_app_model(doc);
    CHECK_FALSE(shortest_trigger_distance(mini, 0).has_value());
}

TEST_CASE("oracle consistency: witness replay covers the function at the stated depth") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    for (const auto& [id, sig] : model.functions.entries) {
        auto d = shortest_trigger_distance(model, id);
        REQUIRE(d.has_value());
        auto witness = shortest_trigger_witness(model, id);
        REQUIRE(witness.has_value());
        CHECK(witness->size() == static_cast<std::size_t>(*d));
        // follow the declared outcomes along the witness path
        std::string screen = model.entry_screen;
        std::set<FunctionId> covered;
        for (const WitnessStep& ws : *witness) {
            CHECK(ws.screen == screen);
            const Transition* t = model.find_transition(ws.screen, ws.action);
            REQUIRE(t != nullptr);
            const Outcome& o = t->outcomes.at(ws.outcome_index);
            covered.insert(o.covered.begin(), o.covered.end());
            screen = o.is_exit() ? model.entry_screen : o.to_screen;
        }
        CHECK(covered.count(id) == 1);
    }
}

TEST_CASE("validation: widget invariants") {
    json doc = one_button_doc();
    doc["screens"][0]["widgets"][0]["bounds"] = {10, 0, 5, 10}; // left >= right
    CHECK_THROWS_AS(parse_app_model(doc), Error);

    doc = one_button_doc();
    doc["screens"][0]["widgets"][0]["events"] = json::array(); // no events
    CHECK_THROWS_AS(parse_app_model(doc), Error);

    doc = one_button_doc();
    doc["screens"][0]["widgets"][0]["events"] = {"back"}; // screen-level event on a widget
    CHECK_THROWS_AS(parse_app_model(doc), Error);

    doc = one_button_doc();
    doc["screens"][0]["widgets"][0]["bounds"] = {0, 0, 2000, 10}; // outside screen dims
    CHECK_THROWS_AS(parse_app_model(doc), Error);
}

TEST_CASE("validation: changed set referencing an unknown function") {
    json doc = minimal_model_doc();
    doc["changed_sets"] = {{"commit_x", {42}}};
    try {
        parse_app_model(doc);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("commit_x") != std::string::npos);
    }
}

TEST_CASE("validation: unreachable screens warn rather than fail") {
    json doc = minimal_model_doc();
    doc["screens"].push_back(
        json{{"id", "S_dead"}, {"activity", "Dead"}, {"widgets", json::array()}});
    AppModel model = parse_app_model(doc); // load succeeds
    std::vector<std::string> warnings;
    validate_app_model(model, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("S_dead") != std::string::npos);
}

TEST_CASE("model file round-trip preserves the fingerprint") {
    AppModel model = load_app_model(kFixtures / "diary_toy.json");
    auto tmp = std::filesystem::temp_directory_path() / "guiq_diary_roundtrip.json";
    save_app_model(model, tmp);
    AppModel again = load_app_model(tmp);
    CHECK(model_fingerprint(model) == model_fingerprint(again));
    std::filesystem::remove(tmp);
}
