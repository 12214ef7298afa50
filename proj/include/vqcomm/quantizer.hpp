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

// Multi-token vector quantization.
//
// An encoder output z of length M is cut into N equal segments of length
// D = M / N. Every segment is replaced by its nearest vector in one shared
// codebook of L codes, and the N codes are concatenated back in order. N = 1
// is classic single-token VQ.
//
// Codes are learned with exponential moving averages of assigned segments,
// not by gradient. The codebook term of the loss is still computed so it can
// be logged next to the commitment term.

#pragma once

#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vqcomm/core/errors.hpp"
#include "vqcomm/core/matrix.hpp"
#include "vqcomm/core/rng.hpp"

namespace vqcomm {

inline constexpr double kDefaultCommitmentCost = 0.25;
inline constexpr double kDefaultEmaDecay = 0.99;
inline constexpr double kEmaEpsilon = 1e-5;

struct QuantizerConfig {
    std::size_t num_tokens = 1;
    double beta = kDefaultCommitmentCost;
    double ema_decay = kDefaultEmaDecay;
    std::size_t latent_dim = 64;

    std::size_t code_dim() const noexcept { return num_tokens == 0 ? 0 : latent_dim / num_tokens; }

    void validate() const {
        if (num_tokens == 0) throw ConfigError("tokens: must be >= 1");
        if (latent_dim == 0) throw ConfigError("latent_dim: must be >= 1");
        if (latent_dim % num_tokens != 0) {
            throw ConfigError("tokens: M mod N must be 0 (latent_dim " +
                              std::to_string(latent_dim) + ", tokens " +
                              std::to_string(num_tokens) + ")");
        }
        if (!(beta >= 0.0)) throw ConfigError("beta: must be >= 0");
        if (!(ema_decay > 0.0 && ema_decay < 1.0)) {
            throw ConfigError("ema_decay: must be in (0, 1)");
        }
    }

    friend bool operator==(const QuantizerConfig&, const QuantizerConfig&) = default;
};

/// L codes of dimension D plus the EMA accumulators that produce them.
/// codes[i] == ema_sums[i] / (ema_counts[i] + eps) after any update.
struct Codebook {
    Matrix codes;
    std::vector<double> ema_counts;
    Matrix ema_sums;

    std::size_t num_codes() const noexcept { return codes.rows(); }
    std::size_t code_dim() const noexcept { return codes.cols(); }

    /// Accumulators start at count 1 with sums chosen so that
    /// sums / (count + eps) reproduces `codes` exactly; an unused code then
    /// keeps its value under the EMA recurrence up to eps-induced drift.
    static Codebook from_codes(Matrix codes) {
        Codebook cb;
        cb.ema_counts.assign(codes.rows(), 1.0);
        cb.ema_sums = codes;
        for (double& v : cb.ema_sums.values()) v *= 1.0 + kEmaEpsilon;
        cb.codes = std::move(codes);
        return cb;
    }

    /// Codes drawn uniformly from [-1/L, 1/L].
    static Codebook uniform(std::size_t num_codes, std::size_t code_dim, Rng& rng) {
        if (num_codes == 0) throw ConfigError("codebook_size: must be >= 1");
        const double r = 1.0 / static_cast<double>(num_codes);
        std::uniform_real_distribution<double> dist(-r, r);
        Matrix codes(num_codes, code_dim);
        for (double& v : codes.values()) v = dist(rng);
        return from_codes(std::move(codes));
    }

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct QuantizeResult {
    std::vector<double> quantized;
    std::vector<std::size_t> indices;
    std::vector<std::vector<double>> segments;
    /// (1/N)·Σ‖sg[s_i] − e_i‖². Same value as the commitment term; differs only in
    /// which side receives gradient.
    double codebook_loss = 0.0;
    /// (1/N)·Σ‖s_i − sg[e_i]‖², not yet multiplied by beta.
    double commitment_loss = 0.0;
};

inline std::vector<std::vector<double>> split_latent(std::span<const double> z,
                                                     std::size_t num_tokens) {
    if (num_tokens == 0 || z.size() % num_tokens != 0) {
        throw ConfigError("split_latent: M mod N must be 0 (M=" + std::to_string(z.size()) +
                          ", N=" + std::to_string(num_tokens) + ")");
    }
    const std::size_t d = z.size() / num_tokens;
    std::vector<std::vector<double>> out;
    out.reserve(num_tokens);
    for (std::size_t i = 0; i < num_tokens; ++i) {
        auto seg = z.subspan(i * d, d);
        out.emplace_back(seg.begin(), seg.end());
    }
    return out;
}

inline std::vector<double> concat_segments(const std::vector<std::vector<double>>& segments) {
    std::vector<double> out;
    for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
    return out;
}

/// argmin_j ‖s − c_j‖², first index wins ties.
inline std::size_t nearest_code(std::span<const double> segment, const Codebook& cb) {
    if (cb.num_codes() == 0) throw ConfigError("nearest_code: empty codebook");
    if (segment.size() != cb.code_dim()) {
        throw ShapeError("nearest_code: segment length " + std::to_string(segment.size()) +
                         " != code dim " + std::to_string(cb.code_dim()));
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cb.num_codes(); ++j) {
        const double d = squared_distance(segment, cb.codes.row(j));
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

inline QuantizeResult quantize(std::span<const double> z, const Codebook& cb,
                               const QuantizerConfig& cfg) {
    if (z.size() != cfg.latent_dim) {
        throw ShapeError("quantize: latent length " + std::to_string(z.size()) +
                         " != latent_dim " + std::to_string(cfg.latent_dim));
    }
    QuantizeResult r;
    r.segments = split_latent(z, cfg.num_tokens);
    r.indices.reserve(cfg.num_tokens);
    r.quantized.reserve(z.size());
    double acc = 0.0;
    for (const auto& seg : r.segments) {
        const std::size_t idx = nearest_code(seg, cb);
        auto code = cb.codes.row(idx);
        acc += squared_distance(seg, code);
        r.indices.push_back(idx);
        r.quantized.insert(r.quantized.end(), code.begin(), code.end());
    }
    r.codebook_loss = acc / static_cast<double>(cfg.num_tokens);
    r.commitment_loss = r.codebook_loss;
    return r;
}

/// Codebook term plus beta times the commitment term.
inline double quantization_loss(const QuantizeResult& r, double beta) {
    return r.codebook_loss + beta * r.commitment_loss;
}

/// Backward of the quantization step: identity.
inline std::vector<double> straight_through(std::span<const double> upstream) {
    return {upstream.begin(), upstream.end()};
}

/// Quantization of a batch; one row per sample.
struct BatchQuantization {
    Matrix quantized;
    std::vector<std::size_t> indices;  ///< row-major (sample, token)
    double codebook_loss = 0.0;        ///< batch mean
    double commitment_loss = 0.0;      ///< batch mean, unweighted
};

inline BatchQuantization quantize_batch(const Matrix& z, const Codebook& cb,
                                        const QuantizerConfig& cfg) {
    BatchQuantization out;
    out.quantized = Matrix(z.rows(), z.cols());
    out.indices.reserve(z.rows() * cfg.num_tokens);
    double acc = 0.0;
    for (std::size_t b = 0; b < z.rows(); ++b) {
        QuantizeResult r = quantize(z.row(b), cb, cfg);
        std::copy(r.quantized.begin(), r.quantized.end(), out.quantized.row(b).begin());
        out.indices.insert(out.indices.end(), r.indices.begin(), r.indices.end());
        acc += r.codebook_loss;
    }
    if (z.rows() > 0) acc /= static_cast<double>(z.rows());
    out.codebook_loss = acc;
    out.commitment_loss = acc;
    return out;
}

/// Same as quantize_batch but with the code assignment given instead of searched.
/// Used to differentiate the VQ path with assignments held fixed.
inline BatchQuantization quantize_batch_frozen(const Matrix& z, const Codebook& cb,
                                               const QuantizerConfig& cfg,
                                               std::span<const std::size_t> indices) {
    const std::size_t n = cfg.num_tokens;
    const std::size_t d = cfg.code_dim();
    if (indices.size() != z.rows() * n) throw ShapeError("quantize_batch_frozen: index count");
    if (z.cols() != cfg.latent_dim || d != cb.code_dim()) {
        throw ShapeError("quantize_batch_frozen: dimension mismatch");
    }
    BatchQuantization out;
    out.quantized = Matrix(z.rows(), z.cols());
    out.indices.assign(indices.begin(), indices.end());
    double acc = 0.0;
    for (std::size_t b = 0; b < z.rows(); ++b) {
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t idx = indices[b * n + t];
            if (idx >= cb.num_codes()) throw ShapeError("quantize_batch_frozen: index range");
            auto code = cb.codes.row(idx);
            auto seg = z.row(b).subspan(t * d, d);
            acc += squared_distance(seg, code) / static_cast<double>(n);
            std::copy(code.begin(), code.end(), out.quantized.row(b).begin() + t * d);
        }
    }
    if (z.rows() > 0) acc /= static_cast<double>(z.rows());
    out.codebook_loss = acc;
    out.commitment_loss = acc;
    return out;
}

/// Gradient of beta·(batch mean of (1/N)Σ‖s_i − sg[e_i]‖²) with respect to z.
inline Matrix commitment_gradient(const Matrix& z, const Matrix& quantized, double beta,
                                  std::size_t num_tokens) {
    require_same_shape(z, quantized, "commitment_gradient");
    Matrix g(z.rows(), z.cols());
    if (z.rows() == 0) return g;
    const double scale =
        2.0 * beta / (static_cast<double>(num_tokens) * static_cast<double>(z.rows()));
    auto zv = z.values();
    auto qv = quantized.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = scale * (zv[i] - qv[i]);
    return g;
}

struct Assignment {
    std::size_t index;
    std::span<const double> segment;
};

/// Splits each row of `z` into tokens and pairs them with their selected code.
/// The spans point into `z`.
inline std::vector<Assignment> batch_assignments(const Matrix& z,
                                                 std::span<const std::size_t> indices,
                                                 std::size_t num_tokens) {
    const std::size_t d = z.cols() / num_tokens;
    std::vector<Assignment> out;
    out.reserve(indices.size());
    for (std::size_t b = 0; b < z.rows(); ++b) {
        for (std::size_t t = 0; t < num_tokens; ++t) {
            out.push_back({indices[b * num_tokens + t], z.row(b).subspan(t * d, d)});
        }
    }
    return out;
}

/// counts ← decay·counts + (1−decay)·n_i, sums ← decay·sums + (1−decay)·Σ segments,
/// codes ← sums / (counts + eps).
inline void ema_update(Codebook& cb, std::span<const Assignment> assignments, double decay) {
    if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("ema_update: decay must be in (0, 1)");
    const std::size_t l = cb.num_codes();
    const std::size_t d = cb.code_dim();
    std::vector<double> n(l, 0.0);
    Matrix sums(l, d);
    for (const auto& a : assignments) {
        if (a.index >= l) {
            throw ShapeError("ema_update: code index " + std::to_string(a.index) +
                             " out of range for " + std::to_string(l) + " codes");
        }
        if (a.segment.size() != d) throw ShapeError("ema_update: segment length mismatch");
        n[a.index] += 1.0;
        auto row = sums.row(a.index);
        for (std::size_t k = 0; k < d; ++k) row[k] += a.segment[k];
    }
    const double keep = 1.0 - decay;
    for (std::size_t i = 0; i < l; ++i) {
        cb.ema_counts[i] = decay * cb.ema_counts[i] + keep * n[i];
        auto es = cb.ema_sums.row(i);
        auto s = sums.row(i);
        auto c = cb.codes.row(i);
        const double denom = cb.ema_counts[i] + kEmaEpsilon;
        for (std::size_t k = 0; k < d; ++k) {
            es[k] = decay * es[k] + keep * s[k];
            c[k] = es[k] / denom;
        }
    }
}

}  // namespace vqcomm
