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

// Experiment configuration: an INI file with sections [experiment], [model],
// [train], [data], [validation], plus `section.key=value` overrides applied
// after the file. Parsing is strict: unknown keys are rejected and every
// constraint is checked before anything runs.

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vqcomm/agent.hpp"
#include "vqcomm/analytics.hpp"
#include "vqcomm/core/adam.hpp"
#include "vqcomm/core/errors.hpp"

namespace vqcomm {

enum class Protocol { individual, cross_training };
enum class DataSource { synthetic, idx };
enum class QuantizerSide { speaker, listener };

struct ExperimentConfig {
    // [experiment]
    Protocol protocol = Protocol::individual;
    ChannelKind channel = ChannelKind::vq;
    std::size_t agents = 4;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::size_t workers = 1;
    // [model]
    std::size_t latent_dim = 64;
    std::size_t hidden = 256;
    std::size_t tokens = 8;
    std::size_t codebook_size = 64;
    double beta = kDefaultCommitmentCost;
    double ema_decay = kDefaultEmaDecay;
    double kl_weight = 1.0;
    // [train]
    double lr = kDefaultLearningRate;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::size_t iterations = 1000;  ///< cross_training only
    std::size_t eval_every = 10;    ///< cross_training only
    std::size_t snapshot_cadence = 10;
    bool usage_detail = false;
    // [data]
    DataSource source = DataSource::synthetic;
    double overlap = 0.1;
    std::size_t n_per_class = 300;
    std::size_t side = 16;
    double noise = 0.05;
    double val_fraction = 0.1;
    std::string images;
    std::string labels;
    bool export_idx = false;
    // [validation]
    QuantizerSide quantizer_side = QuantizerSide::speaker;
    ValidationMode mode = ValidationMode::integrated;

    AgentConfig agent_config(std::size_t input_dim) const {
        AgentConfig a;
        a.input_dim = input_dim;
        a.hidden_dim = hidden;
        a.latent_dim = latent_dim;
        a.channel = channel;
        a.num_tokens = tokens;
        a.codebook_size = codebook_size;
        a.beta = beta;
        a.ema_decay = ema_decay;
        a.kl_weight = kl_weight;
        return a;
    }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline std::string_view to_string(Protocol p) {
    return p == Protocol::individual ? "individual" : "cross_training";
}
inline std::string_view to_string(DataSource d) {
    return d == DataSource::synthetic ? "synthetic" : "idx";
}
inline std::string_view to_string(QuantizerSide q) {
    return q == QuantizerSide::speaker ? "speaker" : "listener";
}

namespace detail {

[[noreturn]] inline void bad_value(std::string_view key, std::string_view expected,
                                   std::string_view got) {
    throw ConfigError(std::string(key) + ": expected " + std::string(expected) + ", got '" +
                      std::string(got) + "'");
}

inline std::uint64_t parse_uint(std::string_view key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
        bad_value(key, "unsigned integer", v);
    }
    return out;
}

inline double parse_real(std::string_view key, const std::string& v) {
    if (v.empty()) bad_value(key, "real number", v);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || !std::isfinite(out)) bad_value(key, "finite real number", v);
    return out;
}

inline bool parse_bool(std::string_view key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, "true|false", v);
}

struct Field {
    std::string_view key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define VQCOMM_UINT_FIELD(name, member)                                                          \
    Field {                                                                                      \
        name, [](const ExperimentConfig& c) { return std::to_string(c.member); },                \
            [](ExperimentConfig& c, const std::string& v) {                                      \
                c.member = static_cast<decltype(c.member)>(parse_uint(name, v));                 \
            }                                                                                    \
    }
#define VQCOMM_REAL_FIELD(name, member)                                                          \
    Field {                                                                                      \
        name, [](const ExperimentConfig& c) { return format_real(c.member); },                   \
            [](ExperimentConfig& c, const std::string& v) { c.member = parse_real(name, v); }    \
    }
#define VQCOMM_BOOL_FIELD(name, member)                                                          \
    Field {                                                                                      \
        name, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); },\
            [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(name, v); }    \
    }
#define VQCOMM_STRING_FIELD(name, member)                                                        \
    Field {                                                                                      \
        name, [](const ExperimentConfig& c) { return c.member; },                                \
            [](ExperimentConfig& c, const std::string& v) { c.member = v; }                      \
    }

/// Every key, in emission order.
inline const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        Field{"experiment.protocol",
              [](const ExperimentConfig& c) { return std::string(to_string(c.protocol)); },
              [](ExperimentConfig& c, const std::string& v) {
                  if (v == "individual") c.protocol = Protocol::individual;
                  else if (v == "cross_training") c.protocol = Protocol::cross_training;
                  else bad_value("experiment.protocol", "individual|cross_training", v);
              }},
        Field{"experiment.channel",
              [](const ExperimentConfig& c) { return std::string(to_string(c.channel)); },
              [](ExperimentConfig& c, const std::string& v) { c.channel = parse_channel_kind(v); }},
        VQCOMM_UINT_FIELD("experiment.agents", agents),
        VQCOMM_UINT_FIELD("experiment.seed", seed),
        VQCOMM_STRING_FIELD("experiment.output_dir", output_dir),
        VQCOMM_UINT_FIELD("experiment.workers", workers),
        VQCOMM_UINT_FIELD("model.latent_dim", latent_dim),
        VQCOMM_UINT_FIELD("model.hidden", hidden),
        VQCOMM_UINT_FIELD("model.tokens", tokens),
        VQCOMM_UINT_FIELD("model.codebook_size", codebook_size),
        VQCOMM_REAL_FIELD("model.beta", beta),
        VQCOMM_REAL_FIELD("model.ema_decay", ema_decay),
        VQCOMM_REAL_FIELD("model.kl_weight", kl_weight),
        VQCOMM_REAL_FIELD("train.lr", lr),
        VQCOMM_UINT_FIELD("train.batch_size", batch_size),
        VQCOMM_UINT_FIELD("train.epochs", epochs),
        VQCOMM_UINT_FIELD("train.iterations", iterations),
        VQCOMM_UINT_FIELD("train.eval_every", eval_every),
        VQCOMM_UINT_FIELD("train.snapshot_cadence", snapshot_cadence),
        VQCOMM_BOOL_FIELD("train.usage_detail", usage_detail),
        Field{"data.source",
              [](const ExperimentConfig& c) { return std::string(to_string(c.source)); },
              [](ExperimentConfig& c, const std::string& v) {
                  if (v == "synthetic") c.source = DataSource::synthetic;
                  else if (v == "idx") c.source = DataSource::idx;
                  else bad_value("data.source", "synthetic|idx", v);
              }},
        VQCOMM_REAL_FIELD("data.overlap", overlap),
        VQCOMM_UINT_FIELD("data.n_per_class", n_per_class),
        VQCOMM_UINT_FIELD("data.side", side),
        VQCOMM_REAL_FIELD("data.noise", noise),
        VQCOMM_REAL_FIELD("data.val_fraction", val_fraction),
        VQCOMM_STRING_FIELD("data.images", images),
        VQCOMM_STRING_FIELD("data.labels", labels),
        VQCOMM_BOOL_FIELD("data.export_idx", export_idx),
        Field{"validation.quantizer",
              [](const ExperimentConfig& c) { return std::string(to_string(c.quantizer_side)); },
              [](ExperimentConfig& c, const std::string& v) {
                  if (v == "speaker") c.quantizer_side = QuantizerSide::speaker;
                  else if (v == "listener") c.quantizer_side = QuantizerSide::listener;
                  else bad_value("validation.quantizer", "speaker|listener", v);
              }},
        Field{"validation.mode",
              [](const ExperimentConfig& c) { return std::string(to_string(c.mode)); },
              [](ExperimentConfig& c, const std::string& v) { c.mode = parse_validation_mode(v); }},
    };
    return table;
}

#undef VQCOMM_UINT_FIELD
#undef VQCOMM_REAL_FIELD
#undef VQCOMM_BOOL_FIELD
#undef VQCOMM_STRING_FIELD

inline const Field& find_field(std::string_view key) {
    for (const auto& f : fields()) {
        if (f.key == key) return f;
    }
    throw ConfigError("unknown field '" + std::string(key) + "'");
}

}  // namespace detail

/// Every constraint the modules impose, checked up front.
inline void validate(const ExperimentConfig& c) {
    if (c.agents < 2) throw ConfigError("experiment.agents: must be >= 2");
    if (c.workers < 1) throw ConfigError("experiment.workers: must be >= 1");
    if (c.output_dir.empty()) throw ConfigError("experiment.output_dir: must not be empty");
    if (!(c.lr > 0.0)) throw ConfigError("train.lr: must be > 0");
    if (c.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (c.protocol == Protocol::cross_training) {
        if (c.iterations < 1) throw ConfigError("train.iterations: must be >= 1");
        if (c.eval_every < 1) throw ConfigError("train.eval_every: must be >= 1");
    }
    if (!(c.overlap >= 0.0 && c.overlap < 1.0)) {
        throw ConfigError("data.overlap: must satisfy 0 <= p < 1, got " + format_real(c.overlap));
    }
    if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
        throw ConfigError("data.val_fraction: must be in (0, 1)");
    }
    if (c.source == DataSource::synthetic) {
        if (c.agents > 16) throw ConfigError("experiment.agents: synthetic data supports at most 16 classes");
        if (c.side < 8) throw ConfigError("data.side: must be >= 8");
        if (!(c.noise >= 0.0)) throw ConfigError("data.noise: must be >= 0");
        if (c.n_per_class < 3) throw ConfigError("data.n_per_class: must be >= 3");
    } else {
        if (c.images.empty()) throw ConfigError("data.images: required when data.source = idx");
        if (c.labels.empty()) throw ConfigError("data.labels: required when data.source = idx");
    }
    if (c.tokens == 0) throw ConfigError("model.tokens: must be >= 1");
    if (uses_quantizer(c.channel)) {
        const std::size_t width = is_half_split(c.channel) ? c.latent_dim / 2 : c.latent_dim;
        if (is_half_split(c.channel) && c.latent_dim % 2 != 0) {
            throw ConfigError("model.latent_dim: must be even for channel " +
                              std::string(to_string(c.channel)));
        }
        if (width % c.tokens != 0) {
            throw ConfigError("model.tokens: M mod N must be 0 (quantized width " +
                              std::to_string(width) + ", tokens " + std::to_string(c.tokens) + ")");
        }
    }
    try {
        c.agent_config(c.source == DataSource::synthetic ? c.side * c.side : 1).validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
}

/// Accumulates a config from a file and overrides, then validates it once.
class ConfigBuilder {
public:
    void load_text(const std::string& text) {
        boost::property_tree::ptree tree;
        std::istringstream in(text);
        try {
            boost::property_tree::ini_parser::read_ini(in, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        for (const auto& [section, body] : tree) {
            if (body.empty() && !body.data().empty()) {
                throw ConfigError("unknown field '" + section + "' (keys must sit in a section)");
            }
            for (const auto& [key, value] : body) {
                set(section + "." + key, value.get_value<std::string>());
            }
        }
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("config: cannot read " + path.string());
        std::stringstream ss;
        ss << f.rdbuf();
        load_text(ss.str());
    }

    void set(const std::string& key, const std::string& value) {
        detail::find_field(key).set(cfg_, value);
        provided_.insert(key);
    }

    /// "section.key=value"
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
        }
        set(assignment.substr(0, eq), assignment.substr(eq + 1));
    }

    /// Requires the protocol and the data source to have been given explicitly.
    ExperimentConfig finish() const {
        for (const char* key : {"experiment.protocol", "data.source"}) {
            if (!provided_.contains(key)) throw ConfigError(std::string(key) + ": required");
        }
        validate(cfg_);
        return cfg_;
    }

private:
    ExperimentConfig cfg_;
    std::set<std::string> provided_;
};

/// Fully resolved INI text; parse_config_text(emit_config(c)) == c.
inline std::string emit_config(const ExperimentConfig& c) {
    std::string out;
    std::string_view current;
    for (const auto& f : detail::fields()) {
        const auto dot = f.key.find('.');
        const std::string_view section = f.key.substr(0, dot);
        if (section != current) {
            if (!current.empty()) out += '\n';
            out += "[" + std::string(section) + "]\n";
            current = section;
        }
        out += std::string(f.key.substr(dot + 1)) + " = " + f.get(c) + "\n";
    }
    return out;
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::vector<std::string>& overrides = {}) {
    ConfigBuilder b;
    b.load_text(text);
    for (const auto& o : overrides) b.apply_override(o);
    return b.finish();
}

inline ExperimentConfig parse_config(const std::filesystem::path& path,
                                     const std::vector<std::string>& overrides = {}) {
    ConfigBuilder b;
    b.load_file(path);
    for (const auto& o : overrides) b.apply_override(o);
    return b.finish();
}

}  // namespace vqcomm
