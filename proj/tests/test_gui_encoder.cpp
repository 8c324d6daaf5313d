#include <doctest.h>

#include <cmath>

#include "gui_encoder.hpp"

using namespace guiq;

namespace {

Widget make_widget(std::string cls, std::string rid, std::string text,
                   std::vector<EventKind> events) {
    Widget w;
    w.widget_class = std::move(cls);
    w.resource_id = std::move(rid);
    w.text = std::move(text);
    w.bounds = {0, 0, 100, 100};
    w.supported_events = std::move(events);
    return w;
}

GuiState two_widget_state() {
    GuiState s;
    s.screen_id = "S0";
    s.activity = "MainActivity";
    s.widgets = {make_widget("Button", "btn_a", "Save entry", {EventKind::click}),
                 make_widget("EditText", "edit_b", "", {EventKind::text_input})};
    return s;
}

std::size_t count_nonzero(const std::vector<double>& v) {
    std::size_t n = 0;
    for (double x : v) {
        if (x != 0.0) ++n;
    }
    return n;
}

} // namespace

TEST_CASE("config: dims below 8 rejected, input dim is the sum") {
    EncoderConfig cfg;
    CHECK(cfg.input_dim() == 256);
    cfg.state_dim = 4;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.state_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("encode_state: empty screen activates exactly the activity bucket") {
    for (std::uint64_t seed : {1ull, 42ull, 0xFEEDull}) {
        EncoderConfig cfg;
        cfg.hash_seed = seed;
        GuiState s;
        s.screen_id = "S0";
        s.activity = "OnlyActivity";
        auto vec = encode_state(cfg, s);
        CHECK(vec.size() == 128);
        CHECK(count_nonzero(vec) == 1);
    }
}

TEST_CASE("encode_state: deterministic and bounded") {
    EncoderConfig cfg;
    GuiState s = two_widget_state();
    auto a = encode_state(cfg, s);
    auto b = encode_state(cfg, s);
    CHECK(a == b);
    for (double x : a) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
        CHECK(std::isfinite(x));
    }
}

TEST_CASE("state key: dynamic text excluded, vectors still differ") {
    GuiState a = two_widget_state();
    GuiState b = two_widget_state();
    b.widgets[1].text = "typed something";
    CHECK(state_key(a) == state_key(b));
    EncoderConfig cfg;
    CHECK(encode_state(cfg, a) != encode_state(cfg, b));
}

TEST_CASE("state key: widget identity and activity are significant") {
    GuiState a = two_widget_state();
    GuiState b = two_widget_state();
    b.activity = "OtherActivity";
    CHECK(state_key(a) != state_key(b));
    GuiState c = two_widget_state();
    c.widgets[0].resource_id = "btn_other";
    CHECK(state_key(a) != state_key(c));
}

TEST_CASE("encode_state: widget declaration order does not matter") {
    EncoderConfig cfg;
    GuiState a = two_widget_state();
    GuiState b = a;
    std::swap(b.widgets[0], b.widgets[1]);
    CHECK(encode_state(cfg, a) == encode_state(cfg, b));
    CHECK(state_key(a) == state_key(b));
}

TEST_CASE("encode_state: locality, editing one widget only moves its buckets") {
    EncoderConfig cfg;
    GuiState a = two_widget_state();
    GuiState b = a;
    b.widgets[1].text = "fresh words";
    auto va = encode_state(cfg, a);
    auto vb = encode_state(cfg, b);
    // buckets fed by the new text tokens (computed from the token stream)
    GuiState only_text;
    only_text.activity = "";
    only_text.widgets = {make_widget("", "", "fresh words", {EventKind::click})};
    // any bucket not fed by widget 1's text tokens must be unchanged; the
    // changed buckets form a small set
    std::size_t changed = 0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        if (va[i] != vb[i]) ++changed;
    }
    CHECK(changed >= 1);
    CHECK(changed <= 2); // two tokens toggled at most two buckets
}

TEST_CASE("encode_action: back touches only the event block") {
    EncoderConfig cfg;
    GuiState s = two_widget_state();
    auto vec = encode_action(cfg, back_action(), s.widgets);
    CHECK(vec.size() == 64);
    CHECK(vec[static_cast<int>(EventKind::back)] == 1.0);
    CHECK(count_nonzero(vec) == 1);
}

TEST_CASE("encode_action: content-based, identical identity encodes identically") {
    EncoderConfig cfg;
    std::vector<Widget> widgets = {make_widget("Button", "same_rid", "x", {EventKind::click}),
                                   make_widget("Button", "same_rid", "y", {EventKind::click})};
    auto a = encode_action(cfg, widget_action(EventKind::click, 0), widgets);
    auto b = encode_action(cfg, widget_action(EventKind::click, 1), widgets);
    CHECK(a == b);
}

TEST_CASE("encode_action: distinct resource ids usually differ (1000 seeds)") {
    std::vector<Widget> widgets = {make_widget("Button", "rid_one", "", {EventKind::click}),
                                   make_widget("Button", "rid_two", "", {EventKind::click})};
    int differing = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        EncoderConfig cfg;
        cfg.hash_seed = seed;
        auto a = encode_action(cfg, widget_action(EventKind::click, 0), widgets);
        auto b = encode_action(cfg, widget_action(EventKind::click, 1), widgets);
        if (a != b) ++differing;
    }
    // collision probability is ~1/(action_dim-8) with a sign coin on top;
    // the contract asks for at least 1 - 2/action_dim
    CHECK(differing >= 1000 - 2 * 1000 / 64);
}

TEST_CASE("encode_action: invalid actions rejected") {
    EncoderConfig cfg;
    GuiState s = two_widget_state();
    CHECK_THROWS_AS(encode_action(cfg, widget_action(EventKind::click, 7), s.widgets), Error);
    ActionSpec widgetless{EventKind::click, std::nullopt, std::nullopt};
    CHECK_THROWS_AS(encode_action(cfg, widgetless, s.widgets), Error);
}

TEST_CASE("encode_goal: determinism, fixture distinctness, empty signature") {
    EncoderConfig cfg;
    FunctionTable table;
    table.entries[0] = "com.diary.MainActivity.onNewEntryClick";
    table.entries[1] = "org.exportkit.CsvWriter.writeRows"; // disjoint token set
    table.entries[2] = "";

    CHECK(encode_goal(cfg, 0, table) == encode_goal(cfg, 0, table));
    CHECK(encode_goal(cfg, 0, table) != encode_goal(cfg, 1, table));

    auto zero = encode_goal(cfg, 2, table);
    CHECK(count_nonzero(zero) == 0);

    CHECK_THROWS_AS(encode_goal(cfg, 99, table), Error);
}

TEST_CASE("encode_input: concatenation in fixed order") {
    EncoderConfig cfg;
    FunctionTable table;
    table.entries[3] = "a.b.c";
    GuiState s = two_widget_state();
    ActionSpec a = widget_action(EventKind::click, 0);
    auto input = encode_input(cfg, s, a, 3, table);
    CHECK(input.size() == 256);

    auto sv = encode_state(cfg, s);
    auto av = encode_action(cfg, a, s.widgets);
    auto gv = encode_goal(cfg, 3, table);
    for (int i = 0; i < cfg.state_dim; ++i) {
        CHECK(input[static_cast<std::size_t>(i)] == sv[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < cfg.action_dim; ++i) {
        CHECK(input[static_cast<std::size_t>(cfg.state_dim + i)] ==
              av[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < cfg.goal_dim; ++i) {
        CHECK(input[static_cast<std::size_t>(cfg.state_dim + cfg.action_dim + i)] ==
              gv[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("boundedness under random fuzz") {
    Rng rng = make_rng(77);
    EncoderConfig cfg;
    FunctionTable table;
    table.entries[0] = "fuzz.some.signature";
    for (int round = 0; round < 200; ++round) {
        GuiState s;
        s.screen_id = "S" + std::to_string(round);
        s.activity = "Act" + std::to_string(rng_below(rng, 50));
        std::size_t n = rng_below(rng, 6);
        for (std::size_t i = 0; i < n; ++i) {
            std::string text;
            for (std::size_t t = rng_below(rng, 8); t > 0; --t) {
                text += static_cast<char>('a' + rng_below(rng, 26));
                if (rng_below(rng, 4) == 0) text += ' ';
            }
            s.widgets.push_back(make_widget("Cls" + std::to_string(rng_below(rng, 5)),
                                            "rid" + std::to_string(rng_below(rng, 40)), text,
                                            {EventKind::click}));
        }
        for (double x : encode_state(cfg, s)) {
            CHECK(std::isfinite(x));
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
        if (!s.widgets.empty()) {
            for (double x : encode_action(cfg, widget_action(EventKind::click, 0), s.widgets)) {
                CHECK(std::isfinite(x));
                CHECK(x >= 0.0);
                CHECK(x <= 1.0);
            }
        }
    }
}
