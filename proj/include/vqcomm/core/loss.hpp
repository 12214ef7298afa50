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

#include "vqcomm/core/matrix.hpp"

namespace vqcomm {

struct LossAndGrad {
    double value = 0.0;
    Matrix grad;  ///< with respect to the prediction
};

/// Mean over all elements of (prediction - target)².
inline LossAndGrad mse_loss(const Matrix& target, const Matrix& prediction) {
    require_same_shape(target, prediction, "mse_loss");
    LossAndGrad out{0.0, Matrix(prediction.rows(), prediction.cols())};
    const std::size_t n = prediction.size();
    if (n == 0) return out;
    const double scale = 2.0 / static_cast<double>(n);
    auto t = target.values();
    auto p = prediction.values();
    auto g = out.grad.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = p[i] - t[i];
        acc += d * d;
        g[i] = scale * d;
    }
    out.value = acc / static_cast<double>(n);
    return out;
}

/// Value-only variant for evaluation paths.
inline double mse(const Matrix& target, const Matrix& prediction) {
    require_same_shape(target, prediction, "mse");
    if (prediction.empty()) return 0.0;
    return squared_distance(target.values(), prediction.values()) /
           static_cast<double>(prediction.size());
}

}  // namespace vqcomm
