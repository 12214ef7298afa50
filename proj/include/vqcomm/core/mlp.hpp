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

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vqcomm/core/adam.hpp"
#include "vqcomm/core/dense.hpp"

namespace vqcomm {

/// A feed-forward stack of dense layers.
struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    /// dims = {in, hidden..., out}; `hidden_act` on every layer but the last.
    static Mlp make(const std::vector<std::size_t>& dims, Activation hidden_act,
                    Activation out_act, Rng& rng) {
        if (dims.size() < 2) throw ConfigError("Mlp::make: need at least input and output dims");
        Mlp net;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            const bool last = i + 2 == dims.size();
            net.layers.push_back(
                DenseLayer::xavier(dims[i], dims[i + 1], last ? out_act : hidden_act, rng));
        }
        return net;
    }

    friend bool operator==(const Mlp&, const Mlp&) = default;
};

struct MlpCache {
    std::vector<DenseCache> layers;
};

struct MlpGrads {
    Matrix grad_x;
    std::vector<Matrix> grad_w;
    std::vector<std::vector<double>> grad_b;
};

inline Matrix mlp_forward(const Mlp& net, const Matrix& x, MlpCache* cache = nullptr) {
    if (cache != nullptr) cache->layers.assign(net.layers.size(), DenseCache{});
    Matrix h = x;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        h = dense_forward(h, net.layers[i], cache != nullptr ? &cache->layers[i] : nullptr);
    }
    return h;
}

inline MlpGrads mlp_backward(const Mlp& net, const Matrix& upstream, const MlpCache& cache) {
    if (cache.layers.size() != net.layers.size()) {
        throw StateError("mlp_backward: cache does not match network");
    }
    MlpGrads out;
    out.grad_w.resize(net.layers.size());
    out.grad_b.resize(net.layers.size());
    Matrix g = upstream;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        DenseGrads lg = dense_backward(g, net.layers[i], cache.layers[i]);
        out.grad_w[i] = std::move(lg.grad_w);
        out.grad_b[i] = std::move(lg.grad_b);
        g = std::move(lg.grad_x);
    }
    out.grad_x = std::move(g);
    return out;
}

/// Adam state for every tensor of one Mlp.
struct MlpOptimizer {
    std::vector<AdamState> weights;
    std::vector<AdamState> biases;

    MlpOptimizer() = default;
    explicit MlpOptimizer(const Mlp& net) {
        for (const auto& l : net.layers) {
            weights.emplace_back(l.weights.size());
            biases.emplace_back(l.bias.size());
        }
    }

    void step(Mlp& net, const MlpGrads& grads, double lr, std::string_view name) {
        if (weights.size() != net.layers.size()) *this = MlpOptimizer(net);
        // Validate everything first so a bad gradient leaves the whole net untouched.
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            check_finite(grads.grad_w[i].values(), name, i, "weights");
            check_finite(grads.grad_b[i], name, i, "bias");
        }
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            const std::string base = std::string(name) + ".layer" + std::to_string(i);
            adam_step(net.layers[i].weights.values(), grads.grad_w[i].values(), weights[i], lr,
                      base + ".weights");
            adam_step(net.layers[i].bias, grads.grad_b[i], biases[i], lr, base + ".bias");
        }
    }

private:
    static void check_finite(std::span<const double> g, std::string_view name, std::size_t layer,
                             const char* tensor) {
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j])) {
                throw NumericalError("non-finite gradient in " + std::string(name) + ".layer" +
                                     std::to_string(layer) + "." + tensor + "[" +
                                     std::to_string(j) + "]");
            }
        }
    }
};

}  // namespace vqcomm
