#include "qnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hash.hpp"

namespace guiq {

namespace {

void check_shapes(const MlpParams& a, const MlpParams& b, const char* what) {
    if (!a.same_shape(b)) {
        throw Error(Errc::invalid_arg, std::string("shape mismatch in ") + what);
    }
}

// y = W x + b, W row-major (rows x cols).
void affine(const std::vector<double>& w, const std::vector<double>& b, std::size_t rows,
            std::size_t cols, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w.data() + r * cols;
        double acc = b[r];
        for (std::size_t c = 0; c < cols; ++c) {
            acc += wr[c] * x[c];
        }
        y[r] = acc;
    }
}

} // namespace

MlpParams init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2 || layer_sizes.front() < 1 || layer_sizes.back() != 1) {
        throw Error(Errc::invalid_arg, "layer sizes must be [input, ..., 1]");
    }
    MlpParams params;
    params.layer_sizes = layer_sizes;
    Rng rng = make_rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        std::size_t fan_in = layer_sizes[l];
        std::size_t fan_out = layer_sizes[l + 1];
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> w(fan_in * fan_out);
        for (double& v : w) {
            v = rng_range(rng, -limit, limit);
        }
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(fan_out, 0.0);
    }
    return params;
}

MlpParams init_params(std::size_t input_dim, std::uint64_t seed) {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), kDefaultHiddenSizes.begin(), kDefaultHiddenSizes.end());
    sizes.push_back(1);
    return init_params(sizes, seed);
}

MlpParams zeros_like(const MlpParams& shape) {
    MlpParams out;
    out.layer_sizes = shape.layer_sizes;
    for (std::size_t l = 0; l < shape.weights.size(); ++l) {
        out.weights.emplace_back(shape.weights[l].size(), 0.0);
        out.biases.emplace_back(shape.biases[l].size(), 0.0);
    }
    return out;
}

double forward(const MlpParams& params, std::span<const double> input) {
    if (input.size() != params.input_dim()) {
        throw Error(Errc::invalid_arg,
                    "input length " + std::to_string(input.size()) + " != declared input dim " +
                        std::to_string(params.input_dim()));
    }
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    const std::size_t layers = params.layer_count();
    for (std::size_t l = 0; l < layers; ++l) {
        std::size_t rows = params.layer_sizes[l + 1];
        std::size_t cols = params.layer_sizes[l];
        next.assign(rows, 0.0);
        affine(params.weights[l], params.biases[l], rows, cols, cur.data(), next.data());
        if (l + 1 < layers) {
            for (double& v : next) {
                v = v > 0.0 ? v : 0.0;
            }
        }
        cur.swap(next);
    }
    return cur[0];
}

void forward_many(const MlpParams& params, const std::vector<std::vector<double>>& inputs,
                  std::span<double> out) {
    if (out.size() != inputs.size()) {
        throw Error(Errc::invalid_arg, "forward_many output size mismatch");
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        out[i] = forward(params, inputs[i]);
    }
}

AdamState init_adam(const MlpParams& params, AdamConfig cfg) {
    AdamState state;
    state.cfg = cfg;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        state.m_w.emplace_back(params.weights[l].size(), 0.0);
        state.v_w.emplace_back(params.weights[l].size(), 0.0);
        state.m_b.emplace_back(params.biases[l].size(), 0.0);
        state.v_b.emplace_back(params.biases[l].size(), 0.0);
    }
    return state;
}

LossGrads loss_and_grads(const MlpParams& params, const Batch& batch) {
    if (batch.inputs.empty() || batch.inputs.size() != batch.td_targets.size()) {
        throw Error(Errc::invalid_arg, "batch inputs and targets must be non-empty and equal length");
    }
    const std::size_t layers = params.layer_count();
    const double inv_n = 1.0 / static_cast<double>(batch.inputs.size());

    LossGrads result;
    result.grads = zeros_like(params);

    // activations[l] = post-activation output of layer l-1 (activations[0] = input)
    std::vector<std::vector<double>> activations(layers + 1);
    std::vector<std::vector<double>> preacts(layers);
    std::vector<double> delta, delta_prev;

    for (std::size_t n = 0; n < batch.inputs.size(); ++n) {
        const std::vector<double>& x = batch.inputs[n];
        if (x.size() != params.input_dim()) {
            throw Error(Errc::invalid_arg, "batch input has wrong dimension");
        }
        activations[0] = x;
        for (std::size_t l = 0; l < layers; ++l) {
            std::size_t rows = params.layer_sizes[l + 1];
            std::size_t cols = params.layer_sizes[l];
            preacts[l].assign(rows, 0.0);
            affine(params.weights[l], params.biases[l], rows, cols, activations[l].data(),
                   preacts[l].data());
            activations[l + 1] = preacts[l];
            if (l + 1 < layers) {
                for (double& v : activations[l + 1]) {
                    v = v > 0.0 ? v : 0.0;
                }
            }
        }
        double q = activations[layers][0];
        double err = q - batch.td_targets[n];
        result.loss += err * err * inv_n;

        // dL/dq for this sample under the batch mean.
        delta.assign(1, 2.0 * err * inv_n);
        for (std::size_t l = layers; l-- > 0;) {
            std::size_t rows = params.layer_sizes[l + 1];
            std::size_t cols = params.layer_sizes[l];
            std::vector<double>& gw = result.grads.weights[l];
            std::vector<double>& gb = result.grads.biases[l];
            const std::vector<double>& a = activations[l];
            for (std::size_t r = 0; r < rows; ++r) {
                double d = delta[r];
                if (d == 0.0) continue;
                gb[r] += d;
                double* gwr = gw.data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) {
                    gwr[c] += d * a[c];
                }
            }
            if (l == 0) break;
            delta_prev.assign(cols, 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                double d = delta[r];
                if (d == 0.0) continue;
                const double* wr = params.weights[l].data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) {
                    delta_prev[c] += d * wr[c];
                }
            }
            // rectifier derivative: pass-through where the preactivation was positive
            for (std::size_t c = 0; c < cols; ++c) {
                if (preacts[l - 1][c] <= 0.0) {
                    delta_prev[c] = 0.0;
                }
            }
            delta.swap(delta_prev);
        }
    }
    return result;
}

void adam_step(MlpParams& params, AdamState& state, const MlpParams& grads) {
    check_shapes(params, grads, "adam_step");
    state.step += 1;
    const AdamConfig& cfg = state.cfg;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto update = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                      const std::vector<double>& g) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        update(params.weights[l], state.m_w[l], state.v_w[l], grads.weights[l]);
        update(params.biases[l], state.m_b[l], state.v_b[l], grads.biases[l]);
    }
}

void sync_target(const MlpParams& prediction, MlpParams& target) {
    target = prediction;
}

double td_target(double reward, bool done, double gamma,
                 const std::vector<std::vector<double>>& candidate_inputs,
                 const MlpParams& prediction, const MlpParams& target) {
    if (done) {
        return reward;
    }
    if (candidate_inputs.empty()) {
        throw Error(Errc::invalid_arg, "td_target requires candidates when the tuple is not terminal");
    }
    std::size_t best = 0;
    double best_q = forward(prediction, candidate_inputs[0]);
    for (std::size_t i = 1; i < candidate_inputs.size(); ++i) {
        double q = forward(prediction, candidate_inputs[i]);
        if (q > best_q) {
            best_q = q;
            best = i;
        }
    }
    return reward + gamma * forward(target, candidate_inputs[best]);
}

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'Q', 'C', 'K', 'P', 'T', '0', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put(std::string& out, T v) {
    put_bytes(out, &v, sizeof(T));
}

void put_vec(std::string& out, const std::vector<double>& v) {
    put<std::uint64_t>(out, v.size());
    put_bytes(out, v.data(), v.size() * sizeof(double));
}

struct Reader {
    const char* p;
    const char* end;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n) {
            throw Error(Errc::io, "checkpoint truncated");
        }
    }
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p, sizeof(T));
        p += sizeof(T);
        return v;
    }
    std::vector<double> get_vec() {
        auto n = get<std::uint64_t>();
        need(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), p, n * sizeof(double));
        p += n * sizeof(double);
        return v;
    }
};

void put_params(std::string& out, const MlpParams& params) {
    put<std::uint64_t>(out, params.layer_sizes.size());
    for (std::size_t s : params.layer_sizes) {
        put<std::uint64_t>(out, s);
    }
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        put_vec(out, params.weights[l]);
        put_vec(out, params.biases[l]);
    }
}

MlpParams get_params(Reader& r) {
    MlpParams params;
    auto n_sizes = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n_sizes; ++i) {
        params.layer_sizes.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    }
    for (std::size_t l = 0; l + 1 < params.layer_sizes.size(); ++l) {
        params.weights.push_back(r.get_vec());
        params.biases.push_back(r.get_vec());
    }
    return params;
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out;
    put_bytes(out, kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint64_t>(out, ckpt.meta.model_version);
    put<std::uint64_t>(out, ckpt.meta.app_fingerprint);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.encoder.state_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.encoder.action_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.encoder.goal_dim));
    put<std::uint64_t>(out, ckpt.encoder.hash_seed);
    put_params(out, ckpt.prediction);
    put_params(out, ckpt.target);
    put<double>(out, ckpt.adam.cfg.lr);
    put<double>(out, ckpt.adam.cfg.beta1);
    put<double>(out, ckpt.adam.cfg.beta2);
    put<double>(out, ckpt.adam.cfg.eps);
    put<std::uint64_t>(out, ckpt.adam.step);
    put<std::uint64_t>(out, ckpt.adam.m_w.size());
    for (std::size_t l = 0; l < ckpt.adam.m_w.size(); ++l) {
        put_vec(out, ckpt.adam.m_w[l]);
        put_vec(out, ckpt.adam.v_w[l]);
        put_vec(out, ckpt.adam.m_b[l]);
        put_vec(out, ckpt.adam.v_b[l]);
    }
    put<std::uint64_t>(out, hash64(out));
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
        throw Error(Errc::io, "checkpoint truncated");
    }
    std::uint64_t stored_digest;
    std::memcpy(&stored_digest, bytes.data() + bytes.size() - sizeof(std::uint64_t),
                sizeof(std::uint64_t));
    std::string_view body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
    if (hash64(body) != stored_digest) {
        throw Error(Errc::io, "checkpoint digest mismatch (file corrupt or truncated)");
    }
    Reader r{body.data(), body.data() + body.size()};
    char magic[sizeof(kMagic)];
    r.need(sizeof(kMagic));
    std::memcpy(magic, r.p, sizeof(kMagic));
    r.p += sizeof(kMagic);
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error(Errc::io, "not a checkpoint file");
    }
    auto format = r.get<std::uint32_t>();
    if (format != kFormatVersion) {
        throw Error(Errc::io, "unknown checkpoint format version " + std::to_string(format));
    }
    Checkpoint ckpt;
    ckpt.meta.model_version = r.get<std::uint64_t>();
    ckpt.meta.app_fingerprint = r.get<std::uint64_t>();
    ckpt.encoder.state_dim = static_cast<int>(r.get<std::uint32_t>());
    ckpt.encoder.action_dim = static_cast<int>(r.get<std::uint32_t>());
    ckpt.encoder.goal_dim = static_cast<int>(r.get<std::uint32_t>());
    ckpt.encoder.hash_seed = r.get<std::uint64_t>();
    ckpt.prediction = get_params(r);
    ckpt.target = get_params(r);
    ckpt.adam.cfg.lr = r.get<double>();
    ckpt.adam.cfg.beta1 = r.get<double>();
    ckpt.adam.cfg.beta2 = r.get<double>();
    ckpt.adam.cfg.eps = r.get<double>();
    ckpt.adam.step = r.get<std::uint64_t>();
    auto layers = r.get<std::uint64_t>();
    for (std::uint64_t l = 0; l < layers; ++l) {
        ckpt.adam.m_w.push_back(r.get_vec());
        ckpt.adam.v_w.push_back(r.get_vec());
        ckpt.adam.m_b.push_back(r.get_vec());
        ckpt.adam.v_b.push_back(r.get_vec());
    }
    if (ckpt.prediction.input_dim() != static_cast<std::size_t>(ckpt.encoder.input_dim())) {
        throw Error(Errc::io, "checkpoint net input dim does not match its encoder config");
    }
    return ckpt;
}

void save_checkpoint(Checkpoint& ckpt, const std::filesystem::path& path) {
    ckpt.meta.model_version += 1;
    std::string bytes = serialize_checkpoint(ckpt);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw_io("cannot write checkpoint: " + path.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw_io("checkpoint write failed: " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_io("cannot open checkpoint: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

std::uint64_t checkpoint_fingerprint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_io("cannot open checkpoint: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(std::uint64_t)) {
        throw Error(Errc::io, "checkpoint truncated");
    }
    std::uint64_t digest;
    std::memcpy(&digest, bytes.data() + bytes.size() - sizeof(std::uint64_t), sizeof(digest));
    return digest;
}

} // namespace guiq
