// Copyright 2026-present the vqcomm authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// An agent is a speaker (encoder), a channel, and a listener (decoder).
//
// The channel decides what travels between the two halves:
//
//   ae               z itself
//   vq               z cut into N tokens, each replaced by its nearest code
//   vae              mu + sigma * noise from two heads on z (mu alone at eval)
//   hybrid_split     first half of z through the vae heads, second half quantized
//   mask_continuous  first half through the vae heads, second half zeroed
//   mask_discrete    first half zeroed, second half quantized
//
// Every pass is written in terms of three possibly different agents: whose
// encoder speaks, whose channel (codebook or heads) carries the message, and
// whose decoder listens. Individual training uses one agent in all three
// roles; cross-validation and cross-training mix them.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vqcomm/analytics.hpp"
#include "vqcomm/core/adam.hpp"
#include "vqcomm/core/dense.hpp"
#include "vqcomm/core/errors.hpp"
#include "vqcomm/core/loss.hpp"
#include "vqcomm/core/matrix.hpp"
#include "vqcomm/core/mlp.hpp"
#include "vqcomm/core/rng.hpp"
#include "vqcomm/quantizer.hpp"

namespace vqcomm {

enum class ChannelKind { ae, vq, vae, hybrid_split, mask_continuous, mask_discrete };

inline std::string_view to_string(ChannelKind k) {
    switch (k) {
        case ChannelKind::ae: return "ae";
        case ChannelKind::vq: return "vq";
        case ChannelKind::vae: return "vae";
        case ChannelKind::hybrid_split: return "hybrid_split";
        case ChannelKind::mask_continuous: return "mask_continuous";
        case ChannelKind::mask_discrete: return "mask_discrete";
    }
    return "?";
}

inline ChannelKind parse_channel_kind(std::string_view s) {
    for (auto k : {ChannelKind::ae, ChannelKind::vq, ChannelKind::vae, ChannelKind::hybrid_split,
                   ChannelKind::mask_continuous, ChannelKind::mask_discrete}) {
        if (s == to_string(k)) return k;
    }
    throw ConfigError("channel: unknown kind '" + std::string(s) +
                      "' (expected ae|vq|vae|hybrid_split|mask_continuous|mask_discrete)");
}

inline bool uses_quantizer(ChannelKind k) {
    return k == ChannelKind::vq || k == ChannelKind::hybrid_split ||
           k == ChannelKind::mask_discrete;
}

inline bool uses_vae(ChannelKind k) {
    return k == ChannelKind::vae || k == ChannelKind::hybrid_split ||
           k == ChannelKind::mask_continuous;
}

inline bool is_half_split(ChannelKind k) {
    return k == ChannelKind::hybrid_split || k == ChannelKind::mask_continuous ||
           k == ChannelKind::mask_discrete;
}

/// Which parts of a hybrid_split message the listener gets at evaluation.
enum class ValidationMode { integrated, discrete_only, continuous_only };

inline std::string_view to_string(ValidationMode m) {
    switch (m) {
        case ValidationMode::integrated: return "integrated";
        case ValidationMode::discrete_only: return "discrete";
        case ValidationMode::continuous_only: return "continuous";
    }
    return "?";
}

inline ValidationMode parse_validation_mode(std::string_view s) {
    if (s == "integrated") return ValidationMode::integrated;
    if (s == "discrete") return ValidationMode::discrete_only;
    if (s == "continuous") return ValidationMode::continuous_only;
    throw ConfigError("validation.mode: unknown mode '" + std::string(s) +
                      "' (expected integrated|discrete|continuous)");
}

struct AgentConfig {
    std::size_t input_dim = 256;
    std::size_t hidden_dim = 256;
    std::size_t latent_dim = 64;
    ChannelKind channel = ChannelKind::vq;
    std::size_t num_tokens = 8;
    std::size_t codebook_size = 64;
    double beta = kDefaultCommitmentCost;
    double ema_decay = kDefaultEmaDecay;
    double kl_weight = 1.0;

    /// Width of the part of z the vae heads see.
    std::size_t continuous_dim() const {
        if (!uses_vae(channel)) return 0;
        return is_half_split(channel) ? latent_dim / 2 : latent_dim;
    }

    /// Width of the part of z that is quantized.
    std::size_t discrete_dim() const {
        if (!uses_quantizer(channel)) return 0;
        return is_half_split(channel) ? latent_dim / 2 : latent_dim;
    }

    /// Column where the discrete part starts.
    std::size_t discrete_offset() const { return is_half_split(channel) ? latent_dim / 2 : 0; }

    QuantizerConfig quantizer() const {
        return QuantizerConfig{num_tokens, beta, ema_decay, discrete_dim()};
    }

    void validate() const {
        if (input_dim == 0) throw ConfigError("input_dim: must be >= 1");
        if (hidden_dim == 0) throw ConfigError("model.hidden: must be >= 1");
        if (latent_dim == 0) throw ConfigError("model.latent_dim: must be >= 1");
        if (is_half_split(channel) && latent_dim % 2 != 0) {
            throw ConfigError("model.latent_dim: must be even for channel " +
                              std::string(to_string(channel)));
        }
        if (uses_quantizer(channel)) {
            if (codebook_size == 0) throw ConfigError("model.codebook_size: must be >= 1");
            quantizer().validate();
        }
        if (!(kl_weight >= 0.0)) throw ConfigError("model.kl_weight: must be >= 0");
    }

    friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

/// Two identity-activated layers reading the continuous part of z.
struct VaeHeads {
    DenseLayer mean;
    DenseLayer log_var;

    friend bool operator==(const VaeHeads&, const VaeHeads&) = default;
};

struct VaeHeadsOptimizer {
    AdamState mean_w, mean_b, log_var_w, log_var_b;
};

struct Agent {
    std::size_t id = 0;
    AgentConfig config;
    Mlp encoder;
    Mlp decoder;
    std::optional<Codebook> codebook;
    std::optional<VaeHeads> vae;

    MlpOptimizer encoder_opt;
    MlpOptimizer decoder_opt;
    VaeHeadsOptimizer vae_opt;

    /// Encoder in→hidden→M (relu), decoder M→hidden→in (relu, sigmoid out),
    /// Xavier weights and a uniform codebook, all drawn from `seed`.
    static Agent create(std::size_t id, const AgentConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Agent a;
        a.id = id;
        a.config = cfg;
        Rng init = make_stream(seed, "init");
        a.encoder = Mlp::make({cfg.input_dim, cfg.hidden_dim, cfg.latent_dim}, Activation::relu,
                              Activation::identity, init);
        a.decoder = Mlp::make({cfg.latent_dim, cfg.hidden_dim, cfg.input_dim}, Activation::relu,
                              Activation::sigmoid, init);
        if (uses_vae(cfg.channel)) {
            const std::size_t d = cfg.continuous_dim();
            a.vae = VaeHeads{DenseLayer::xavier(d, d, Activation::identity, init),
                             DenseLayer::xavier(d, d, Activation::identity, init)};
        }
        if (uses_quantizer(cfg.channel)) {
            Rng cb_rng = make_stream(seed, "codebook");
            a.codebook = Codebook::uniform(cfg.codebook_size, cfg.quantizer().code_dim(), cb_rng);
        }
        a.encoder_opt = MlpOptimizer(a.encoder);
        a.decoder_opt = MlpOptimizer(a.decoder);
        return a;
    }
};

/// Loss components as they enter the total: commitment already carries beta and
/// kl already carries kl_weight.
struct ForwardRecord {
    Matrix reconstruction;
    Matrix latent;  ///< what the decoder received
    double recon = 0.0;
    double codebook = 0.0;
    double commitment = 0.0;
    double kl = 0.0;

    double total() const noexcept { return recon + codebook + commitment + kl; }
};

struct PassOptions {
    /// Draw reparameterization noise. Off means the mean latent is used.
    bool sample = false;
    ValidationMode mode = ValidationMode::integrated;
    /// Hold the code assignment fixed instead of searching (gradient checks).
    std::span<const std::size_t> frozen_indices{};
};

/// Everything the backward pass needs from one forward pass.
struct Pass {
    Matrix input;
    MlpCache encoder_cache;
    MlpCache decoder_cache;
    Matrix z;
    // discrete path
    bool has_discrete = false;
    Matrix discrete_in;
    BatchQuantization quant;
    // continuous path
    bool has_continuous = false;
    Matrix continuous_in;
    DenseCache mean_cache;
    DenseCache log_var_cache;
    Matrix mean;
    Matrix log_var;
    Matrix noise;  ///< empty when not sampling
    ForwardRecord record;
};

namespace detail {

inline void require_compatible(const Agent& speaker, const Agent& channel, const Agent& listener) {
    if (speaker.config.latent_dim != listener.config.latent_dim ||
        speaker.config.latent_dim != channel.config.latent_dim) {
        throw ConfigError("incompatible latent dims between agents " + std::to_string(speaker.id) +
                          ", " + std::to_string(channel.id) + ", " + std::to_string(listener.id));
    }
    if (speaker.config.channel != channel.config.channel) {
        throw ConfigError("speaker and channel owner use different channel kinds");
    }
    if (speaker.config.input_dim != listener.config.input_dim) {
        throw ConfigError("incompatible input dims between speaker and listener");
    }
}

}  // namespace detail

inline Pass forward_pass(const Agent& speaker, const Agent& channel, const Agent& listener,
                         const Matrix& x, const PassOptions& opts = {}, Rng* noise_rng = nullptr) {
    detail::require_compatible(speaker, channel, listener);
    const AgentConfig& cfg = channel.config;
    const ChannelKind kind = cfg.channel;
    const std::size_t batch = x.rows();
    const std::size_t m = cfg.latent_dim;

    Pass p;
    p.input = x;
    p.z = mlp_forward(speaker.encoder, x, &p.encoder_cache);
    Matrix message(batch, m);

    bool keep_discrete = uses_quantizer(kind);
    bool keep_continuous = uses_vae(kind);
    if (kind == ChannelKind::hybrid_split) {
        keep_discrete = opts.mode != ValidationMode::continuous_only;
        keep_continuous = opts.mode != ValidationMode::discrete_only;
    }

    if (keep_continuous) {
        const std::size_t d = cfg.continuous_dim();
        p.has_continuous = true;
        p.continuous_in = slice_cols(p.z, 0, d);
        p.mean = dense_forward(p.continuous_in, channel.vae->mean, &p.mean_cache);
        p.log_var = dense_forward(p.continuous_in, channel.vae->log_var, &p.log_var_cache);
        Matrix latent = p.mean;
        if (opts.sample) {
            if (noise_rng == nullptr) throw UsageError("forward_pass: sampling needs an rng");
            p.noise = Matrix(batch, d);
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (double& v : p.noise.values()) v = gauss(*noise_rng);
        }
        double kl = 0.0;
        for (std::size_t i = 0; i < p.mean.size(); ++i) {
            const double mu = p.mean.values()[i];
            const double lv = p.log_var.values()[i];
            const double var = std::exp(lv);
            if (!std::isfinite(var) || !std::isfinite(mu)) {
                throw NumericalError("forward_pass: non-finite sigma in agent " +
                                     std::to_string(channel.id));
            }
            kl += 0.5 * (mu * mu + var - 1.0 - lv);
            if (opts.sample) latent.values()[i] += std::sqrt(var) * p.noise.values()[i];
        }
        if (batch > 0) kl /= static_cast<double>(batch);
        p.record.kl = cfg.kl_weight * kl;
        write_cols(message, 0, latent);
    }

    if (keep_discrete) {
        const std::size_t d = cfg.discrete_dim();
        const std::size_t off = cfg.discrete_offset();
        const QuantizerConfig qcfg = cfg.quantizer();
        p.has_discrete = true;
        p.discrete_in = (off == 0 && d == m) ? p.z : slice_cols(p.z, off, d);
        p.quant = opts.frozen_indices.empty()
                      ? quantize_batch(p.discrete_in, *channel.codebook, qcfg)
                      : quantize_batch_frozen(p.discrete_in, *channel.codebook, qcfg,
                                              opts.frozen_indices);
        p.record.codebook = p.quant.codebook_loss;
        p.record.commitment = cfg.beta * p.quant.commitment_loss;
        write_cols(message, off, p.quant.quantized);
    }

    if (kind == ChannelKind::ae) message = p.z;

    p.record.reconstruction = mlp_forward(listener.decoder, message, &p.decoder_cache);
    p.record.latent = std::move(message);
    p.record.recon = mse(x, p.record.reconstruction);
    return p;
}

struct PassGrads {
    MlpGrads encoder;
    MlpGrads decoder;
    std::optional<DenseGrads> mean;
    std::optional<DenseGrads> log_var;
};

/// Gradients of recon + commitment + kl. The quantizer passes gradient straight
/// through; the codebook itself is learned by EMA and gets no gradient.
inline PassGrads backward_pass(const Pass& p, const Agent& speaker, const Agent& channel,
                               const Agent& listener) {
    const AgentConfig& cfg = channel.config;
    const std::size_t batch = p.input.rows();

    PassGrads g;
    LossAndGrad recon = mse_loss(p.input, p.record.reconstruction);
    g.decoder = mlp_backward(listener.decoder, recon.grad, p.decoder_cache);
    const Matrix& grad_message = g.decoder.grad_x;

    Matrix grad_z(batch, cfg.latent_dim);
    if (cfg.channel == ChannelKind::ae) {
        grad_z = grad_message;
    }

    if (p.has_discrete) {
        const std::size_t off = cfg.discrete_offset();
        const std::size_t d = cfg.discrete_dim();
        Matrix up = slice_cols(grad_message, off, d);
        std::vector<double> st = straight_through(up.values());
        Matrix commit = commitment_gradient(p.discrete_in, p.quant.quantized, cfg.beta,
                                            cfg.num_tokens);
        for (std::size_t i = 0; i < st.size(); ++i) st[i] += commit.values()[i];
        write_cols(grad_z, off, Matrix(batch, d, std::move(st)));
    }

    if (p.has_continuous) {
        const std::size_t d = cfg.continuous_dim();
        Matrix up = slice_cols(grad_message, 0, d);
        Matrix g_mean(batch, d);
        Matrix g_log_var(batch, d);
        const double w = batch > 0 ? cfg.kl_weight / static_cast<double>(batch) : 0.0;
        for (std::size_t i = 0; i < up.size(); ++i) {
            const double mu = p.mean.values()[i];
            const double lv = p.log_var.values()[i];
            const double var = std::exp(lv);
            double gm = up.values()[i] + w * mu;
            double glv = w * 0.5 * (var - 1.0);
            if (!p.noise.empty()) glv += up.values()[i] * p.noise.values()[i] * 0.5 * std::sqrt(var);
            g_mean.values()[i] = gm;
            g_log_var.values()[i] = glv;
        }
        g.mean = dense_backward(g_mean, channel.vae->mean, p.mean_cache);
        g.log_var = dense_backward(g_log_var, channel.vae->log_var, p.log_var_cache);
        Matrix gc = g.mean->grad_x;
        for (std::size_t i = 0; i < gc.size(); ++i) gc.values()[i] += g.log_var->grad_x.values()[i];
        write_cols(grad_z, 0, gc);
    }

    g.encoder = mlp_backward(speaker.encoder, grad_z, p.encoder_cache);
    return g;
}

/// Adam on the speaker's encoder, the channel owner's heads and the listener's
/// decoder; EMA on the channel owner's codebook.
inline void apply_update(Agent& speaker, Agent& channel, Agent& listener, const Pass& p,
                         const PassGrads& g, double lr) {
    speaker.encoder_opt.step(speaker.encoder, g.encoder, lr,
                             "agent" + std::to_string(speaker.id) + ".encoder");
    if (g.mean && channel.vae) {
        const std::string base = "agent" + std::to_string(channel.id) + ".vae";
        VaeHeads& h = *channel.vae;
        VaeHeadsOptimizer& o = channel.vae_opt;
        adam_step(h.mean.weights.values(), g.mean->grad_w.values(), o.mean_w, lr, base + ".mean.w");
        adam_step(h.mean.bias, g.mean->grad_b, o.mean_b, lr, base + ".mean.b");
        adam_step(h.log_var.weights.values(), g.log_var->grad_w.values(), o.log_var_w, lr,
                  base + ".log_var.w");
        adam_step(h.log_var.bias, g.log_var->grad_b, o.log_var_b, lr, base + ".log_var.b");
    }
    listener.decoder_opt.step(listener.decoder, g.decoder, lr,
                              "agent" + std::to_string(listener.id) + ".decoder");
    if (p.has_discrete && channel.codebook) {
        auto assignments =
            batch_assignments(p.discrete_in, p.quant.indices, channel.config.num_tokens);
        ema_update(*channel.codebook, assignments, channel.config.ema_decay);
    }
}

namespace detail {

inline void require_channel(const Agent& a, std::initializer_list<ChannelKind> kinds,
                            const char* op) {
    for (auto k : kinds) {
        if (a.config.channel == k) return;
    }
    throw UsageError(std::string(op) + ": agent " + std::to_string(a.id) + " has channel " +
                     std::string(to_string(a.config.channel)));
}

}  // namespace detail

inline ForwardRecord forward_ae(const Agent& a, const Matrix& x) {
    detail::require_channel(a, {ChannelKind::ae}, "forward_ae");
    return forward_pass(a, a, a, x).record;
}

inline ForwardRecord forward_vq(const Agent& a, const Matrix& x) {
    detail::require_channel(a, {ChannelKind::vq}, "forward_vq");
    return forward_pass(a, a, a, x).record;
}

/// With `rng` the latent is sampled; without it the mean latent is used.
inline ForwardRecord forward_vae(const Agent& a, const Matrix& x, Rng* rng) {
    detail::require_channel(a, {ChannelKind::vae}, "forward_vae");
    PassOptions o;
    o.sample = rng != nullptr;
    return forward_pass(a, a, a, x, o, rng).record;
}

inline ForwardRecord forward_hybrid(const Agent& a, const Matrix& x, ValidationMode mode,
                                    Rng* rng = nullptr) {
    detail::require_channel(
        a, {ChannelKind::hybrid_split, ChannelKind::mask_continuous, ChannelKind::mask_discrete},
        "forward_hybrid");
    PassOptions o;
    o.sample = rng != nullptr;
    o.mode = mode;
    return forward_pass(a, a, a, x, o, rng).record;
}

/// Mean over batches (weighted by batch rows) of each loss component.
struct EpochMetrics {
    double recon = 0.0;
    double codebook = 0.0;
    double commitment = 0.0;
    double kl = 0.0;
    std::size_t batches = 0;
    std::vector<UsageCounts> batch_usage;

    double total() const noexcept { return recon + codebook + commitment + kl; }
    /// Codebook term plus beta-weighted commitment term.
    double quantization() const noexcept { return codebook + commitment; }
};

/// One optimization step of `speaker → channel → listener` on batch `x`.
inline Pass train_step(Agent& speaker, Agent& channel, Agent& listener, const Matrix& x, double lr,
                       Rng& rng) {
    PassOptions o;
    o.sample = uses_vae(channel.config.channel);
    Pass p = forward_pass(speaker, channel, listener, x, o, &rng);
    if (!std::isfinite(p.record.total())) {
        throw NumericalError("non-finite loss for speaker " + std::to_string(speaker.id) +
                             ", listener " + std::to_string(listener.id));
    }
    PassGrads g = backward_pass(p, speaker, channel, listener);
    apply_update(speaker, channel, listener, p, g, lr);
    return p;
}

/// One shuffled pass over `data` (one row per sample).
inline EpochMetrics train_epoch(Agent& agent, const Matrix& data, std::size_t batch_size, double lr,
                                Rng& rng) {
    if (data.rows() == 0) throw UsageError("train_epoch: empty dataset");
    if (batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
    std::vector<std::size_t> order(data.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    EpochMetrics em;
    double rows_seen = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, order.size() - start);
        Matrix x = gather_rows(data, std::span<const std::size_t>(order).subspan(start, n));
        Pass p;
        try {
            p = train_step(agent, agent, agent, x, lr, rng);
        } catch (const NumericalError& e) {
            throw NumericalError("agent " + std::to_string(agent.id) + ", batch " +
                                 std::to_string(em.batches) + ": " + e.what());
        }
        const double w = static_cast<double>(n);
        em.recon += w * p.record.recon;
        em.codebook += w * p.record.codebook;
        em.commitment += w * p.record.commitment;
        em.kl += w * p.record.kl;
        rows_seen += w;
        if (p.has_discrete) {
            em.batch_usage.push_back(usage_counts(p.quant.indices, agent.codebook->num_codes()));
        }
        ++em.batches;
    }
    em.recon /= rows_seen;
    em.codebook /= rows_seen;
    em.commitment /= rows_seen;
    em.kl /= rows_seen;
    return em;
}

/// Mean squared reconstruction error of `speaker → channel → listener` over all
/// rows of `data`, with the deterministic (mean) latent.
inline double evaluate_exchange(const Agent& speaker, const Agent& channel, const Agent& listener,
                                const Matrix& data, ValidationMode mode = ValidationMode::integrated,
                                std::size_t chunk = 256) {
    if (data.rows() == 0) throw UsageError("evaluate_exchange: empty dataset");
    double sq = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.rows(); start += chunk) {
        const std::size_t n = std::min(chunk, data.rows() - start);
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
        Matrix x = gather_rows(data, idx);
        PassOptions o;
        o.mode = mode;
        Pass p = forward_pass(speaker, channel, listener, x, o);
        sq += squared_distance(x.values(), p.record.reconstruction.values());
    }
    return sq / static_cast<double>(data.size());
}

}  // namespace vqcomm
