#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gui_encoder.hpp"

namespace guiq {

/// Fully-connected net with rectifier hidden layers and an identity scalar
/// output. weights[l] is row-major (layer_sizes[l+1] x layer_sizes[l]).
struct MlpParams {
    std::vector<std::size_t> layer_sizes; // [input, hidden..., 1]
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    std::size_t input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
    std::size_t layer_count() const { return weights.size(); }
    bool same_shape(const MlpParams& other) const { return layer_sizes == other.layer_sizes; }
};

inline const std::vector<std::size_t> kDefaultHiddenSizes = {256, 128};

/// Glorot-uniform weights, zero biases; deterministic under `seed`.
MlpParams init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);
MlpParams init_params(std::size_t input_dim, std::uint64_t seed);
MlpParams zeros_like(const MlpParams& shape);

double forward(const MlpParams& params, std::span<const double> input);

/// Batched forward; out.size() must equal inputs.size().
void forward_many(const MlpParams& params, const std::vector<std::vector<double>>& inputs,
                  std::span<double> out);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
};

AdamState init_adam(const MlpParams& params, AdamConfig cfg = {});

struct Batch {
    std::vector<std::vector<double>> inputs;
    std::vector<double> td_targets;
};

struct LossGrads {
    double loss = 0.0;
    MlpParams grads; // same shapes as the parameters
};

/// Mean squared TD error and its gradient by reverse-mode differentiation.
LossGrads loss_and_grads(const MlpParams& params, const Batch& batch);

/// Bias-corrected Adam update, in place.
void adam_step(MlpParams& params, AdamState& state, const MlpParams& grads);

void sync_target(const MlpParams& prediction, MlpParams& target);

/// Double-DQN target: r + gamma * (1-d) * Q'(argmax over candidates under the
/// prediction net). `candidate_inputs` are the encoded (s', a_i, g) vectors
/// in candidate-ordinal order; ties break toward the lowest ordinal.
double td_target(double reward, bool done, double gamma,
                 const std::vector<std::vector<double>>& candidate_inputs,
                 const MlpParams& prediction, const MlpParams& target);

// ---- checkpoints ------------------------------------------------------------

struct CheckpointMeta {
    std::uint64_t model_version = 0;
    std::uint64_t app_fingerprint = 0; // 0 = not bound to a specific app model
};

struct Checkpoint {
    MlpParams prediction;
    MlpParams target;
    AdamState adam;
    EncoderConfig encoder;
    CheckpointMeta meta;
};

/// Versioned little-endian container with a trailing content digest.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Writes the checkpoint, bumping meta.model_version by one first.
void save_checkpoint(Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Content digest stored in the file trailer.
std::uint64_t checkpoint_fingerprint(const std::filesystem::path& path);

} // namespace guiq
