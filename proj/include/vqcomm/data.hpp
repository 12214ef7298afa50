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

// Per-agent datasets with a controlled amount of foreign-class data.
//
// Agent i learns mostly from class i. From every class a validation slice is
// removed first, then s items are set aside and handed to the other m-1
// agents. With P items left per class after the first cut, the fraction of an
// agent's training set that comes from other classes is
//
//     m*s / (P + (m-1)*s)
//
// and s is the largest integer that keeps this at or below the target p.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vqcomm/core/errors.hpp"
#include "vqcomm/core/matrix.hpp"
#include "vqcomm/core/rng.hpp"

namespace vqcomm {

/// Rows of `features` are items with values in [0, 1]; `ids` are stable and
/// survive every split so disjointness can be checked.
struct LabeledDataset {
    Matrix features;
    std::vector<std::size_t> labels;
    std::vector<std::uint64_t> ids;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    /// Items at `rows`, in order.
    LabeledDataset subset(std::span<const std::size_t> rows) const {
        LabeledDataset out;
        out.features = gather_rows(features, rows);
        out.num_classes = num_classes;
        out.labels.reserve(rows.size());
        out.ids.reserve(rows.size());
        for (std::size_t r : rows) {
            out.labels.push_back(labels[r]);
            out.ids.push_back(ids[r]);
        }
        return out;
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Row indices of each class, in dataset order.
inline std::vector<std::vector<std::size_t>> partition_by_class(const LabeledDataset& ds) {
    std::vector<std::vector<std::size_t>> classes(ds.num_classes);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (ds.labels[r] >= ds.num_classes) {
            throw ConfigError("partition_by_class: label " + std::to_string(ds.labels[r]) +
                              " >= class count " + std::to_string(ds.num_classes));
        }
        classes[ds.labels[r]].push_back(r);
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (classes[c].empty()) {
            throw ConfigError("partition_by_class: class " + std::to_string(c) + " is empty");
        }
    }
    return classes;
}

/// Largest s with m*s / (p_train + (m-1)*s) <= p.
inline std::size_t overlap_count(std::size_t p_train, std::size_t m, double p) {
    if (m < 2) throw ConfigError("overlap_count: need m >= 2 classes");
    if (p_train == 0) throw ConfigError("overlap_count: P_train must be > 0");
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("data.overlap: must be in [0, 1)");
    const double md = static_cast<double>(m);
    const double denom = md - p * (md - 1.0);
    if (!(denom > 0.0)) throw ConfigError("overlap_count: m - p(m-1) must be > 0");
    const double exact = p * static_cast<double>(p_train) / denom;
    auto s = static_cast<std::size_t>(std::floor(exact));
    // Guard the floor against representation error right at an integer.
    auto ratio = [&](std::size_t k) {
        return md * static_cast<double>(k) /
               (static_cast<double>(p_train) + (md - 1.0) * static_cast<double>(k));
    };
    while (s > 0 && ratio(s) > p) --s;
    while (ratio(s + 1) <= p) ++s;
    return s;
}

struct OverlapPlan {
    std::size_t m = 0;
    double p = 0.0;
    std::size_t n_val_per_class = 0;
    std::size_t s = 0;
    std::size_t p_train = 0;

    double realized_ratio() const {
        const double md = static_cast<double>(m);
        const double sd = static_cast<double>(s);
        return md * sd / (static_cast<double>(p_train) + (md - 1.0) * sd);
    }

    /// Plan for classes of `class_size` items with `val_fraction` of each class
    /// held out (at least one item).
    static OverlapPlan make(std::size_t m, double p, std::size_t class_size, double val_fraction) {
        if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
            throw ConfigError("data.val_fraction: must be in (0, 1)");
        }
        OverlapPlan plan;
        plan.m = m;
        plan.p = p;
        plan.n_val_per_class = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(class_size))));
        if (plan.n_val_per_class >= class_size) {
            throw ConfigError("OverlapPlan: class of " + std::to_string(class_size) +
                              " items too small for a validation slice");
        }
        plan.p_train = class_size - plan.n_val_per_class;
        plan.s = overlap_count(plan.p_train, m, p);
        return plan;
    }
};

struct AgentDatasets {
    std::vector<LabeledDataset> train_sets;
    LabeledDataset val_set;
};

/// Splits `ds` per `plan`. Sampling is without replacement and driven by one
/// rng seeded from `seed`, so the result is a pure function of the inputs.
inline AgentDatasets build_agent_datasets(const LabeledDataset& ds, const OverlapPlan& plan,
                                          std::uint64_t seed) {
    if (ds.num_classes != plan.m) {
        throw ConfigError("build_agent_datasets: dataset has " + std::to_string(ds.num_classes) +
                          " classes, plan expects " + std::to_string(plan.m));
    }
    auto classes = partition_by_class(ds);
    Rng rng = make_stream(seed, "overlap");

    std::vector<std::size_t> val_rows;
    std::vector<std::vector<std::size_t>> own(plan.m);
    std::vector<std::vector<std::size_t>> donated(plan.m);
    for (std::size_t c = 0; c < plan.m; ++c) {
        auto rows = classes[c];
        if (rows.size() < plan.n_val_per_class + plan.s + 1) {
            throw ConfigError("build_agent_datasets: class " + std::to_string(c) + " has " +
                              std::to_string(rows.size()) + " items, needs at least " +
                              std::to_string(plan.n_val_per_class + plan.s + 1));
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        auto it = rows.begin();
        val_rows.insert(val_rows.end(), it, it + static_cast<std::ptrdiff_t>(plan.n_val_per_class));
        it += static_cast<std::ptrdiff_t>(plan.n_val_per_class);
        donated[c].assign(it, it + static_cast<std::ptrdiff_t>(plan.s));
        it += static_cast<std::ptrdiff_t>(plan.s);
        own[c].assign(it, rows.end());
        std::sort(own[c].begin(), own[c].end());
    }

    AgentDatasets out;
    std::sort(val_rows.begin(), val_rows.end());
    out.val_set = ds.subset(val_rows);
    for (std::size_t i = 0; i < plan.m; ++i) {
        std::vector<std::size_t> rows = own[i];
        for (std::size_t c = 0; c < plan.m; ++c) {
            if (c != i) rows.insert(rows.end(), donated[c].begin(), donated[c].end());
        }
        out.train_sets.push_back(ds.subset(rows));
    }
    return out;
}

/// Validation slice per `val_fraction` of each class, everything else pooled
/// into one training set shared by all agents.
inline AgentDatasets build_shared_datasets(const LabeledDataset& ds, double val_fraction,
                                           std::size_t num_agents, std::uint64_t seed) {
    auto classes = partition_by_class(ds);
    Rng rng = make_stream(seed, "shared_split");
    std::vector<std::size_t> val_rows;
    std::vector<std::size_t> train_rows;
    for (auto rows : classes) {
        const auto n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(rows.size()))));
        if (n_val >= rows.size()) throw ConfigError("build_shared_datasets: class too small");
        std::shuffle(rows.begin(), rows.end(), rng);
        val_rows.insert(val_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
    }
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    AgentDatasets out;
    out.val_set = ds.subset(val_rows);
    LabeledDataset train = ds.subset(train_rows);
    out.train_sets.assign(num_agents, train);
    return out;
}

/// Procedural stripes: class c has its own orientation and spatial frequency;
/// items vary by a small phase and contrast jitter plus uniform noise of
/// amplitude `noise`. Values are clamped to [0, 1].
inline LabeledDataset synth_dataset(std::uint64_t seed, std::size_t m, std::size_t n_per_class,
                                    std::size_t side, double noise = 0.05) {
    if (m == 0 || m > 16) throw ConfigError("synth_dataset: classes must be in [1, 16]");
    if (side < 8) throw ConfigError("data.side: must be >= 8");
    Rng rng = make_stream(seed, "synth");
    std::uniform_real_distribution<double> phase_jitter(-std::numbers::pi / 4, std::numbers::pi / 4);
    std::uniform_real_distribution<double> contrast(0.8, 1.0);
    std::uniform_real_distribution<double> unit_noise(-noise, noise);

    LabeledDataset ds;
    ds.num_classes = m;
    ds.features = Matrix(m * n_per_class, side * side);
    const double s = static_cast<double>(side);
    std::size_t row = 0;
    for (std::size_t c = 0; c < m; ++c) {
        const double angle = std::numbers::pi * static_cast<double>(c) / static_cast<double>(m);
        const double freq = 1.5 + static_cast<double>(c % 3);
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);
        for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
            const double phase = phase_jitter(rng);
            const double amp = 0.5 * contrast(rng);
            auto px = ds.features.row(row);
            for (std::size_t y = 0; y < side; ++y) {
                for (std::size_t x = 0; x < side; ++x) {
                    const double u = (static_cast<double>(x) * ca + static_cast<double>(y) * sa) / s;
                    double v = 0.5 + amp * std::sin(2.0 * std::numbers::pi * freq * u + phase);
                    v += unit_noise(rng);
                    px[y * side + x] = std::clamp(v, 0.0, 1.0);
                }
            }
            ds.labels.push_back(c);
            ds.ids.push_back(row);
        }
    }
    return ds;
}

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                               const std::filesystem::path& path) {
    if (offset + 4 > buf.size()) {
        throw ParseError(path.string() + ": truncated header at byte offset " +
                         std::to_string(offset));
    }
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

/// IDX image + label files (big-endian, magic 0x803 / 0x801). Pixels are
/// scaled to [0, 1]; the class count is max label + 1.
inline LabeledDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path) {
    const auto img = detail::read_file(images_path);
    const auto lab = detail::read_file(labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
    if (img_magic != kIdxImageMagic) {
        throw ParseError(images_path.string() + ": bad magic at byte offset 0");
    }
    const std::uint32_t lab_magic = detail::read_be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabelMagic) {
        throw ParseError(labels_path.string() + ": bad magic at byte offset 0");
    }
    const std::size_t count = detail::read_be32(img, 4, images_path);
    const std::size_t rows = detail::read_be32(img, 8, images_path);
    const std::size_t cols = detail::read_be32(img, 12, images_path);
    const std::size_t label_count = detail::read_be32(lab, 4, labels_path);
    if (count != label_count) {
        throw ParseError(labels_path.string() + ": item count " + std::to_string(label_count) +
                         " at byte offset 4 does not match image count " + std::to_string(count));
    }
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + count * pixels) {
        throw ParseError(images_path.string() + ": truncated image data at byte offset " +
                         std::to_string(img.size()) + " (expected " +
                         std::to_string(16 + count * pixels) + " bytes)");
    }
    if (lab.size() < 8 + count) {
        throw ParseError(labels_path.string() + ": truncated label data at byte offset " +
                         std::to_string(lab.size()) + " (expected " + std::to_string(8 + count) +
                         " bytes)");
    }

    LabeledDataset ds;
    ds.features = Matrix(count, pixels);
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        auto px = ds.features.row(i);
        for (std::size_t k = 0; k < pixels; ++k) {
            px[k] = static_cast<double>(img[16 + i * pixels + k]) / 255.0;
        }
        const std::size_t label = lab[8 + i];
        max_label = std::max(max_label, label);
        ds.labels.push_back(label);
        ds.ids.push_back(i);
    }
    ds.num_classes = count == 0 ? 0 : max_label + 1;
    return ds;
}

/// Writes `ds` as IDX files of rows×cols images, pixels rounded to u8.
inline void write_idx(const LabeledDataset& ds, std::size_t rows, std::size_t cols,
                      const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
    if (rows * cols != ds.dim() && ds.size() > 0) throw ShapeError("write_idx: image shape");
    std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
    std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
    if (!img || !lab) throw IoError("write_idx: cannot open output files");
    detail::write_be32(img, kIdxImageMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(img, static_cast<std::uint32_t>(rows));
    detail::write_be32(img, static_cast<std::uint32_t>(cols));
    detail::write_be32(lab, kIdxLabelMagic);
    detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.features.row(i)) {
            img.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
        lab.put(static_cast<char>(ds.labels[i]));
    }
    if (!img || !lab) throw IoError("write_idx: write failed");
}

}  // namespace vqcomm
