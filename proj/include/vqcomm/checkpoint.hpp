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

// Binary agent checkpoints.
//
// Layout (all integers little-endian u64, reals raw IEEE-754 doubles in host
// order, which is little-endian on every supported target):
//
//   "VQCAGENT"  magic, 8 bytes
//   version     u64, currently 1
//   id, channel, input_dim, hidden_dim, latent_dim, num_tokens, codebook_size
//   beta, ema_decay, kl_weight
//   encoder, decoder        : layer count, then per layer activation, rows,
//                             cols, weights, bias
//   has_vae (u64), [mean layer, log_var layer]
//   has_codebook (u64), [rows, cols, codes, counts, sums]
//
// Optimizer moments are not stored; a loaded agent is for evaluation or for
// training restarted with fresh Adam state.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "vqcomm/agent.hpp"
#include "vqcomm/core/errors.hpp"

namespace vqcomm {

inline constexpr char kCheckpointMagic[8] = {'V', 'Q', 'C', 'A', 'G', 'E', 'N', 'T'};
inline constexpr std::uint64_t kCheckpointVersion = 1;

namespace detail {

class CkptWriter {
public:
    explicit CkptWriter(const std::filesystem::path& path)
        : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!out_) throw IoError("save_agent: cannot open " + path.string());
    }
    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("save_agent: write failed for " + path_.string());
    }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void real(double v) { bytes(&v, sizeof v); }
    void reals(std::span<const double> v) { bytes(v.data(), v.size() * sizeof(double)); }
    void layer(const DenseLayer& l) {
        u64(static_cast<std::uint64_t>(l.activation));
        u64(l.weights.rows());
        u64(l.weights.cols());
        reals(l.weights.values());
        reals(l.bias);
    }
    void mlp(const Mlp& m) {
        u64(m.layers.size());
        for (const auto& l : m.layers) layer(l);
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

class CkptReader {
public:
    explicit CkptReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("load_agent: cannot open " + path.string());
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw ParseError("load_agent: truncated checkpoint at byte offset " +
                             std::to_string(offset_));
        }
        offset_ += n;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        bytes(&v, sizeof v);
        return v;
    }
    double real() {
        double v = 0.0;
        bytes(&v, sizeof v);
        return v;
    }
    std::size_t dim() {
        const std::uint64_t at = offset_;
        const std::uint64_t v = u64();
        if (v > (1ULL << 32)) {
            throw ParseError("load_agent: implausible dimension at byte offset " +
                             std::to_string(at));
        }
        return static_cast<std::size_t>(v);
    }
    DenseLayer layer() {
        DenseLayer l;
        const std::uint64_t at = offset_;
        const std::uint64_t act = u64();
        if (act > 3) throw ParseError("load_agent: bad activation at byte offset " + std::to_string(at));
        l.activation = static_cast<Activation>(act);
        const std::size_t rows = dim();
        const std::size_t cols = dim();
        l.weights = Matrix(rows, cols);
        bytes(l.weights.data(), l.weights.size() * sizeof(double));
        l.bias.resize(rows);
        bytes(l.bias.data(), rows * sizeof(double));
        return l;
    }
    Mlp mlp() {
        Mlp m;
        const std::size_t n = dim();
        for (std::size_t i = 0; i < n; ++i) m.layers.push_back(layer());
        return m;
    }
    std::uint64_t offset() const { return offset_; }

private:
    std::ifstream in_;
    std::uint64_t offset_ = 0;
};

}  // namespace detail

inline void save_agent(const Agent& a, const std::filesystem::path& path) {
    detail::CkptWriter w(path);
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u64(kCheckpointVersion);
    const AgentConfig& c = a.config;
    w.u64(a.id);
    w.u64(static_cast<std::uint64_t>(c.channel));
    w.u64(c.input_dim);
    w.u64(c.hidden_dim);
    w.u64(c.latent_dim);
    w.u64(c.num_tokens);
    w.u64(c.codebook_size);
    w.real(c.beta);
    w.real(c.ema_decay);
    w.real(c.kl_weight);
    w.mlp(a.encoder);
    w.mlp(a.decoder);
    w.u64(a.vae ? 1 : 0);
    if (a.vae) {
        w.layer(a.vae->mean);
        w.layer(a.vae->log_var);
    }
    w.u64(a.codebook ? 1 : 0);
    if (a.codebook) {
        w.u64(a.codebook->codes.rows());
        w.u64(a.codebook->codes.cols());
        w.reals(a.codebook->codes.values());
        w.reals(a.codebook->ema_counts);
        w.reals(a.codebook->ema_sums.values());
    }
}

inline Agent load_agent(const std::filesystem::path& path) {
    detail::CkptReader r(path);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw ParseError("load_agent: bad magic at byte offset 0");
    }
    const std::uint64_t version = r.u64();
    if (version != kCheckpointVersion) {
        throw ParseError("load_agent: unsupported version " + std::to_string(version) +
                         " at byte offset 8");
    }
    Agent a;
    a.id = r.dim();
    AgentConfig& c = a.config;
    const std::uint64_t at = r.offset();
    const std::uint64_t kind = r.u64();
    if (kind > static_cast<std::uint64_t>(ChannelKind::mask_discrete)) {
        throw ParseError("load_agent: bad channel kind at byte offset " + std::to_string(at));
    }
    c.channel = static_cast<ChannelKind>(kind);
    c.input_dim = r.dim();
    c.hidden_dim = r.dim();
    c.latent_dim = r.dim();
    c.num_tokens = r.dim();
    c.codebook_size = r.dim();
    c.beta = r.real();
    c.ema_decay = r.real();
    c.kl_weight = r.real();
    a.encoder = r.mlp();
    a.decoder = r.mlp();
    if (r.u64() != 0) {
        VaeHeads h;
        h.mean = r.layer();
        h.log_var = r.layer();
        a.vae = std::move(h);
    }
    if (r.u64() != 0) {
        const std::size_t rows = r.dim();
        const std::size_t cols = r.dim();
        Codebook cb;
        cb.codes = Matrix(rows, cols);
        r.bytes(cb.codes.data(), cb.codes.size() * sizeof(double));
        cb.ema_counts.resize(rows);
        r.bytes(cb.ema_counts.data(), rows * sizeof(double));
        cb.ema_sums = Matrix(rows, cols);
        r.bytes(cb.ema_sums.data(), cb.ema_sums.size() * sizeof(double));
        a.codebook = std::move(cb);
    }
    a.encoder_opt = MlpOptimizer(a.encoder);
    a.decoder_opt = MlpOptimizer(a.decoder);
    return a;
}

}  // namespace vqcomm
