#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "app_model.hpp"

namespace guiq {

inline constexpr std::uint64_t kDefaultHashSeed = 0x9E3779B97F4A7C15ULL;

/// Dimensions of the hashed (state, action, goal) input to the Q network.
/// Serialized into checkpoints so inference always matches training.
struct EncoderConfig {
    int state_dim = 128;
    int action_dim = 64;
    int goal_dim = 64;
    std::uint64_t hash_seed = kDefaultHashSeed;

    int input_dim() const { return state_dim + action_dim + goal_dim; }
    void validate() const;

    bool operator==(const EncoderConfig&) const = default;
};

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& doc);

/// Canonical digest of (activity, sorted widget identities); dynamic text is
/// excluded, so "the screen did not change" is exactly key equality.
struct StateKey {
    std::uint64_t digest = 0;
    auto operator<=>(const StateKey&) const = default;
};

StateKey state_key(const GuiState& state);

/// Signed feature hashing of the screen's tokens, squashed into [0,1].
std::vector<double> encode_state(const EncoderConfig& cfg, const GuiState& state);

/// Event-kind one-hot in the first slots, hashed widget identity in the rest.
/// `widgets` is the widget list of the screen the action runs on.
std::vector<double> encode_action(const EncoderConfig& cfg, const ActionSpec& action,
                                  std::span<const Widget> widgets);

/// Hash of the signature's dot-separated tokens.
std::vector<double> encode_goal(const EncoderConfig& cfg, FunctionId goal,
                                const FunctionTable& table);

/// Concatenation [state | action | goal]; the Q-network input.
std::vector<double> encode_input(const EncoderConfig& cfg, const GuiState& state,
                                 const ActionSpec& action, FunctionId goal,
                                 const FunctionTable& table);

/// Assemble an input from precomputed parts (hot path in the trainer).
std::vector<double> assemble_input(std::span<const double> state_vec,
                                   std::span<const double> action_vec,
                                   std::span<const double> goal_vec);

} // namespace guiq
