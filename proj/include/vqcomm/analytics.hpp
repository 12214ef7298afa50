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

// Codebook statistics: how often each code is picked, how evenly, how many
// codes are alive, and how far apart the codebooks of different agents are.
// Everything here is a pure function of its arguments.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vqcomm/core/errors.hpp"
#include "vqcomm/core/matrix.hpp"
#include "vqcomm/quantizer.hpp"

namespace vqcomm {

using UsageCounts = std::vector<std::uint64_t>;

/// Histogram of selected code indices over [0, num_codes).
inline UsageCounts usage_counts(std::span<const std::size_t> indices, std::size_t num_codes) {
    UsageCounts counts(num_codes, 0);
    for (std::size_t idx : indices) {
        if (idx >= num_codes) {
            throw ShapeError("usage_counts: index " + std::to_string(idx) + " >= " +
                             std::to_string(num_codes));
        }
        ++counts[idx];
    }
    return counts;
}

/// Population variance of the counts.
template <typename T>
double usage_variance(std::span<const T> counts) {
    if (counts.empty()) return 0.0;
    const double n = static_cast<double>(counts.size());
    double mean = 0.0;
    for (T c : counts) mean += static_cast<double>(c);
    mean /= n;
    double acc = 0.0;
    for (T c : counts) {
        const double d = static_cast<double>(c) - mean;
        acc += d * d;
    }
    return acc / n;
}

inline double usage_variance(const UsageCounts& counts) {
    return usage_variance(std::span<const std::uint64_t>(counts));
}

/// Fraction of codes selected at least once.
template <typename T>
double utilization_rate(std::span<const T> counts) {
    if (counts.empty()) return 0.0;
    std::size_t used = 0;
    for (T c : counts) used += c > T{0} ? 1 : 0;
    return static_cast<double>(used) / static_cast<double>(counts.size());
}

inline double utilization_rate(const UsageCounts& counts) {
    return utilization_rate(std::span<const std::uint64_t>(counts));
}

/// Per-epoch selection statistics for one agent.
struct UsageLedger {
    std::vector<std::size_t> epochs;
    std::vector<UsageCounts> epoch_counts;        ///< summed over the epoch's batches
    std::vector<double> mean_batch_utilization;   ///< mean over batches of utilization_rate
    std::vector<double> mean_batch_variance;      ///< mean over batches of usage_variance
    /// Raw per-batch counts, kept only when detail recording is on.
    std::vector<std::vector<UsageCounts>> batch_counts;

    void record(std::size_t epoch, const std::vector<UsageCounts>& batches, bool keep_detail) {
        if (batches.empty()) return;
        UsageCounts total(batches.front().size(), 0);
        double util = 0.0;
        double var = 0.0;
        for (const auto& b : batches) {
            for (std::size_t i = 0; i < b.size(); ++i) total[i] += b[i];
            util += utilization_rate(b);
            var += usage_variance(b);
        }
        const double n = static_cast<double>(batches.size());
        epochs.push_back(epoch);
        epoch_counts.push_back(std::move(total));
        mean_batch_utilization.push_back(util / n);
        mean_batch_variance.push_back(var / n);
        if (keep_detail) batch_counts.push_back(batches);
    }
};

namespace detail {

inline void require_codebook_shapes(std::span<const Matrix> codebooks) {
    if (codebooks.size() < 2) throw UsageError("pairwise_codebook_distance: need m >= 2 codebooks");
    for (const auto& c : codebooks) {
        if (c.rows() != codebooks.front().rows() || c.cols() != codebooks.front().cols()) {
            throw ShapeError("pairwise_codebook_distance: codebook shapes differ");
        }
    }
}

}  // namespace detail

/// Mean over the m(m−1)/2 unordered pairs of the entrywise Euclidean distance
/// between two codebooks. Rows are compared position by position, so two
/// codebooks that hold the same codes in a different order are *not* at
/// distance zero.
inline double pairwise_codebook_distance(std::span<const Matrix> codebooks) {
    detail::require_codebook_shapes(codebooks);
    const std::size_t m = codebooks.size();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            total += std::sqrt(squared_distance(codebooks[i].values(), codebooks[j].values()));
        }
    }
    return total * 2.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
}

inline double pairwise_codebook_distance(std::span<const Codebook> codebooks) {
    std::vector<Matrix> codes;
    codes.reserve(codebooks.size());
    for (const auto& cb : codebooks) codes.push_back(cb.codes);
    return pairwise_codebook_distance(std::span<const Matrix>(codes));
}

/// Order-insensitive variant for sensitivity checks: for every pair, rows of the
/// second codebook are greedily matched to rows of the first (closest unmatched
/// row, first row first) before measuring. Never used for reported results.
inline double pairwise_codebook_distance_matched(std::span<const Matrix> codebooks) {
    detail::require_codebook_shapes(codebooks);
    const std::size_t m = codebooks.size();
    const std::size_t l = codebooks.front().rows();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            std::vector<bool> taken(l, false);
            double acc = 0.0;
            for (std::size_t u = 0; u < l; ++u) {
                double best = std::numeric_limits<double>::infinity();
                std::size_t best_v = 0;
                for (std::size_t v = 0; v < l; ++v) {
                    if (taken[v]) continue;
                    const double d = squared_distance(codebooks[i].row(u), codebooks[j].row(v));
                    if (d < best) {
                        best = d;
                        best_v = v;
                    }
                }
                taken[best_v] = true;
                acc += best;
            }
            total += std::sqrt(acc);
        }
    }
    return total * 2.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
}

struct QuantLossPoint {
    std::size_t epoch = 0;
    std::size_t tokens = 0;
    double value = 0.0;

    friend bool operator==(const QuantLossPoint&, const QuantLossPoint&) = default;
};

/// Stamps a per-epoch series of quantization losses for export.
inline std::vector<QuantLossPoint> track_quantization_loss(std::span<const double> per_epoch,
                                                           std::size_t tokens,
                                                           std::size_t first_epoch = 1) {
    std::vector<QuantLossPoint> out;
    out.reserve(per_epoch.size());
    for (std::size_t i = 0; i < per_epoch.size(); ++i) {
        out.push_back({first_epoch + i, tokens, per_epoch[i]});
    }
    return out;
}

/// 17 significant digits, enough for strtod to recover the exact double.
inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string codebook_csv(const Matrix& codes) {
    std::string out = "index";
    for (std::size_t k = 0; k < codes.cols(); ++k) out += ",d" + std::to_string(k);
    out += '\n';
    for (std::size_t i = 0; i < codes.rows(); ++i) {
        out += std::to_string(i);
        for (double v : codes.row(i)) {
            out += ',';
            out += format_real(v);
        }
        out += '\n';
    }
    return out;
}

inline void export_codebook(const Matrix& codes, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("export_codebook: cannot open " + path.string());
    f << codebook_csv(codes);
    if (!f) throw IoError("export_codebook: write failed for " + path.string());
}

inline void export_codebook(const Codebook& cb, const std::filesystem::path& path) {
    export_codebook(cb.codes, path);
}

inline Matrix import_codebook(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("import_codebook: cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ParseError("import_codebook: missing header");
    std::size_t dims = 0;
    for (char c : line) dims += c == ',' ? 1 : 0;
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        char* end = nullptr;
        const unsigned long long index = std::strtoull(cell.c_str(), &end, 10);
        if (cell.empty() || *end != '\0' || index != rows) {
            throw ParseError("import_codebook: row " + std::to_string(rows) + " has index " + cell);
        }
        std::size_t n = 0;
        while (std::getline(ss, cell, ',')) {
            char* vend = nullptr;
            values.push_back(std::strtod(cell.c_str(), &vend));
            if (cell.empty() || *vend != '\0') {
                throw ParseError("import_codebook: row " + std::to_string(rows) +
                                 " has a non-numeric value '" + cell + "'");
            }
            ++n;
        }
        if (n != dims) throw ParseError("import_codebook: row " + std::to_string(rows) +
                                        " has " + std::to_string(n) + " values");
        ++rows;
    }
    return Matrix(rows, dims, std::move(values));
}

}  // namespace vqcomm
