#include "gui_encoder.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "hash.hpp"

namespace guiq {

using nlohmann::json;

void EncoderConfig::validate() const {
    if (state_dim < 8 || action_dim < 8 || goal_dim < 8) {
        throw Error(Errc::validation, "encoder dimensions must all be >= 8");
    }
}

json encoder_config_to_json(const EncoderConfig& cfg) {
    return json{{"state_dim", cfg.state_dim},
                {"action_dim", cfg.action_dim},
                {"goal_dim", cfg.goal_dim},
                {"hash_seed", cfg.hash_seed}};
}

EncoderConfig encoder_config_from_json(const json& doc) {
    EncoderConfig cfg;
    cfg.state_dim = doc.value("state_dim", cfg.state_dim);
    cfg.action_dim = doc.value("action_dim", cfg.action_dim);
    cfg.goal_dim = doc.value("goal_dim", cfg.goal_dim);
    cfg.hash_seed = doc.value("hash_seed", cfg.hash_seed);
    cfg.validate();
    return cfg;
}

namespace {

// StateKey must not vary with the encoder's hash seed: it defines screen
// equality for the reward rule, not a feature.
constexpr std::uint64_t kStateKeySeed = 0x5157A7E5EEDULL;

void add_token(std::vector<double>& acc, std::string_view token, std::uint64_t seed) {
    std::uint64_t h = hash64(token, seed);
    std::size_t bucket = static_cast<std::size_t>(h & 0xFFFFFFFFULL) % acc.size();
    double sign = (h >> 32) & 1 ? 1.0 : -1.0;
    acc[bucket] += sign;
}

std::vector<double> squash(const std::vector<double>& acc) {
    std::vector<double> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        double a = std::abs(acc[i]);
        out[i] = a / (1.0 + a);
    }
    return out;
}

void for_each_text_token(std::string_view text, auto&& fn) {
    std::size_t start = 0;
    while (start < text.size()) {
        while (start < text.size() && !std::isalnum(static_cast<unsigned char>(text[start]))) {
            ++start;
        }
        std::size_t end = start;
        while (end < text.size() && std::isalnum(static_cast<unsigned char>(text[end]))) {
            ++end;
        }
        if (end > start) {
            fn(text.substr(start, end - start));
        }
        start = end;
    }
}

} // namespace

StateKey state_key(const GuiState& state) {
    std::vector<std::string> parts;
    parts.reserve(state.widgets.size());
    for (const Widget& w : state.widgets) {
        std::string p = w.widget_class;
        p += '\x1e';
        p += w.resource_id;
        p += '\x1e';
        std::vector<EventKind> ev = w.supported_events;
        std::sort(ev.begin(), ev.end());
        for (EventKind e : ev) {
            p += event_kind_name(e);
            p += ',';
        }
        parts.push_back(std::move(p));
    }
    std::sort(parts.begin(), parts.end());
    std::string canon = state.activity;
    for (const std::string& p : parts) {
        canon += '\x1f';
        canon += p;
    }
    return StateKey{hash64(canon, kStateKeySeed)};
}

std::vector<double> encode_state(const EncoderConfig& cfg, const GuiState& state) {
    std::vector<double> acc(static_cast<std::size_t>(cfg.state_dim), 0.0);
    add_token(acc, "act:" + state.activity, cfg.hash_seed);
    for (const Widget& w : state.widgets) {
        add_token(acc, "cls:" + w.widget_class, cfg.hash_seed);
        add_token(acc, "rid:" + w.resource_id, cfg.hash_seed);
        for (EventKind e : w.supported_events) {
            add_token(acc, "evt:" + std::string(event_kind_name(e)), cfg.hash_seed);
        }
        for_each_text_token(w.text, [&](std::string_view token) {
            add_token(acc, "txt:" + std::string(token), cfg.hash_seed);
        });
    }
    return squash(acc);
}

std::vector<double> encode_action(const EncoderConfig& cfg, const ActionSpec& action,
                                  std::span<const Widget> widgets) {
    constexpr std::size_t kEventBlock = 8;
    std::vector<double> out(static_cast<std::size_t>(cfg.action_dim), 0.0);
    out[static_cast<std::size_t>(action.event)] = 1.0;
    if (action.event == EventKind::back) {
        if (action.widget_index) {
            throw Error(Errc::invalid_arg, "back action must not target a widget");
        }
        return out;
    }
    if (!action.widget_index || *action.widget_index < 0 ||
        static_cast<std::size_t>(*action.widget_index) >= widgets.size()) {
        throw Error(Errc::invalid_arg, "action targets an invalid widget index");
    }
    const Widget& w = widgets[static_cast<std::size_t>(*action.widget_index)];
    std::vector<double> acc(static_cast<std::size_t>(cfg.action_dim) - kEventBlock, 0.0);
    add_token(acc, "acls:" + w.widget_class, cfg.hash_seed);
    add_token(acc, "arid:" + w.resource_id, cfg.hash_seed);
    std::vector<double> hashed = squash(acc);
    std::copy(hashed.begin(), hashed.end(), out.begin() + kEventBlock);
    return out;
}

std::vector<double> encode_goal(const EncoderConfig& cfg, FunctionId goal,
                                const FunctionTable& table) {
    const std::string& signature = table.signature(goal);
    std::vector<double> acc(static_cast<std::size_t>(cfg.goal_dim), 0.0);
    std::size_t start = 0;
    while (start <= signature.size()) {
        std::size_t dot = signature.find('.', start);
        std::size_t end = dot == std::string::npos ? signature.size() : dot;
        if (end > start) {
            add_token(acc, "g:" + signature.substr(start, end - start), cfg.hash_seed);
        }
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return squash(acc);
}

std::vector<double> assemble_input(std::span<const double> state_vec,
                                   std::span<const double> action_vec,
                                   std::span<const double> goal_vec) {
    std::vector<double> out;
    out.reserve(state_vec.size() + action_vec.size() + goal_vec.size());
    out.insert(out.end(), state_vec.begin(), state_vec.end());
    out.insert(out.end(), action_vec.begin(), action_vec.end());
    out.insert(out.end(), goal_vec.begin(), goal_vec.end());
    return out;
}

std::vector<double> encode_input(const EncoderConfig& cfg, const GuiState& state,
                                 const ActionSpec& action, FunctionId goal,
                                 const FunctionTable& table) {
    return assemble_input(encode_state(cfg, state),
                          encode_action(cfg, action, state.widgets),
                          encode_goal(cfg, goal, table));
}

} // namespace guiq
