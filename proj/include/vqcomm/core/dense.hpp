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

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vqcomm/core/errors.hpp"
#include "vqcomm/core/matrix.hpp"
#include "vqcomm/core/rng.hpp"

namespace vqcomm {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2, sigmoid = 3 };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

inline double activate(Activation a, double x) noexcept {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

/// Derivative of the activation, written in terms of the pre-activation `x`
/// and the already computed output `y`.
inline double activation_slope(Activation a, double x, double y) noexcept {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - y * y;
        case Activation::sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

/// y = activation(x·Wᵀ + b), W stored out×in.
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;
    Activation activation = Activation::identity;

    std::size_t in_dim() const noexcept { return weights.cols(); }
    std::size_t out_dim() const noexcept { return weights.rows(); }

    /// Xavier-uniform weights, zero bias.
    static DenseLayer xavier(std::size_t in, std::size_t out, Activation act, Rng& rng) {
        DenseLayer layer;
        layer.weights = Matrix(out, in);
        layer.bias.assign(out, 0.0);
        layer.activation = act;
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& w : layer.weights.values()) w = dist(rng);
        return layer;
    }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct DenseCache {
    Matrix input;
    Matrix pre_activation;
    Matrix output;
    bool valid = false;
};

struct DenseGrads {
    Matrix grad_x;
    Matrix grad_w;
    std::vector<double> grad_b;
};

inline Matrix dense_forward(const Matrix& x, const DenseLayer& layer, DenseCache* cache = nullptr) {
    if (x.cols() != layer.in_dim()) {
        throw ShapeError("dense_forward: input has " + std::to_string(x.cols()) +
                         " columns, layer expects " + std::to_string(layer.in_dim()));
    }
    if (layer.bias.size() != layer.out_dim()) {
        throw ShapeError("dense_forward: bias length does not match weights");
    }
    const std::size_t batch = x.rows();
    const std::size_t out = layer.out_dim();
    Matrix pre(batch, out);
    Matrix y(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
        auto xr = x.row(b);
        for (std::size_t o = 0; o < out; ++o) {
            auto wr = layer.weights.row(o);
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < xr.size(); ++i) acc += xr[i] * wr[i];
            pre(b, o) = acc;
            y(b, o) = activate(layer.activation, acc);
        }
    }
    if (cache != nullptr) {
        cache->input = x;
        cache->pre_activation = std::move(pre);
        cache->output = y;
        cache->valid = true;
    }
    return y;
}

inline DenseGrads dense_backward(const Matrix& upstream, const DenseLayer& layer,
                                 const DenseCache& cache) {
    if (!cache.valid) {
        throw StateError("dense_backward: no forward cache");
    }
    require_same_shape(upstream, cache.output, "dense_backward");
    const std::size_t batch = upstream.rows();
    const std::size_t out = layer.out_dim();
    const std::size_t in = layer.in_dim();

    DenseGrads g{Matrix(batch, in), Matrix(out, in), std::vector<double>(out, 0.0)};
    for (std::size_t b = 0; b < batch; ++b) {
        auto xr = cache.input.row(b);
        auto gx = g.grad_x.row(b);
        for (std::size_t o = 0; o < out; ++o) {
            const double delta = upstream(b, o) * activation_slope(layer.activation,
                                                                   cache.pre_activation(b, o),
                                                                   cache.output(b, o));
            if (delta == 0.0) continue;
            g.grad_b[o] += delta;
            auto gw = g.grad_w.row(o);
            auto wr = layer.weights.row(o);
            for (std::size_t i = 0; i < in; ++i) {
                gw[i] += delta * xr[i];
                gx[i] += delta * wr[i];
            }
        }
    }
    return g;
}

}  // namespace vqcomm
