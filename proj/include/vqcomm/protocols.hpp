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

// The two experiment drivers.
//
// Individual training: agent j trains alone on train_set_j. Afterwards every
// ordered pair (speaker j, listener k) is scored on the shared validation set
// and the communication loss is the sum over speakers of the mean loss with
// all other listeners.
//
// Cross-training: all agents see the same data; each iteration draws a
// speaker i, a different listener k and a channel owner from {i, k}, and
// optimizes exactly that encoder, channel and decoder.

#pragma once

#include <cstdint>
#include <exception>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "vqcomm/agent.hpp"
#include "vqcomm/analytics.hpp"
#include "vqcomm/config.hpp"
#include "vqcomm/core/errors.hpp"
#include "vqcomm/core/matrix.hpp"
#include "vqcomm/core/rng.hpp"
#include "vqcomm/data.hpp"

namespace vqcomm {

/// losses(j, k): mean reconstruction error of speaker j heard by listener k.
struct CommMatrix {
    std::size_t m = 0;
    Matrix losses;

    friend bool operator==(const CommMatrix&, const CommMatrix&) = default;
};

inline double communication_loss(const CommMatrix& cm) {
    if (cm.m < 2) throw UsageError("communication_loss: need m >= 2 agents");
    double total = 0.0;
    for (std::size_t j = 0; j < cm.m; ++j) {
        double row = 0.0;
        for (std::size_t k = 0; k < cm.m; ++k) {
            if (k != j) row += cm.losses(j, k);
        }
        total += row / static_cast<double>(cm.m - 1);
    }
    return total;
}

struct CrossValidationOptions {
    QuantizerSide quantizer_side = QuantizerSide::speaker;
    ValidationMode mode = ValidationMode::integrated;
    std::size_t workers = 1;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first
/// failure by index order so errors are reported deterministically.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto run = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) run(i);
    } else {
        std::vector<std::thread> pool;
        const std::size_t w = std::min(workers, n);
        for (std::size_t t = 0; t < w; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < n; i += w) run(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

inline CommMatrix cross_validate(std::span<const Agent> agents, const LabeledDataset& val_set,
                                 const CrossValidationOptions& opts = {}) {
    if (val_set.size() == 0) throw UsageError("cross_validate: empty validation set");
    const std::size_t m = agents.size();
    for (const auto& a : agents) {
        if (a.config.latent_dim != agents.front().config.latent_dim ||
            a.config.input_dim != agents.front().config.input_dim) {
            throw ConfigError("cross_validate: incompatible latent dims (agent " +
                              std::to_string(a.id) + ")");
        }
    }
    CommMatrix cm{m, Matrix(m, m)};
    detail::parallel_for(m * m, opts.workers, [&](std::size_t cell) {
        const std::size_t j = cell / m;
        const std::size_t k = cell % m;
        const std::size_t owner = opts.quantizer_side == QuantizerSide::speaker ? j : k;
        cm.losses(j, k) =
            evaluate_exchange(agents[j], agents[owner], agents[k], val_set.features, opts.mode);
    });
    return cm;
}

struct CurvePoint {
    std::size_t epoch = 0;  ///< iteration for cross-training
    std::size_t agent = 0;
    std::string component;
    double value = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct CodebookSnapshot {
    std::size_t epoch = 0;
    std::size_t agent = 0;
    Matrix codes;
};

struct DistancePoint {
    std::size_t epoch = 0;
    double value = 0.0;
};

struct PairDraw {
    std::size_t speaker = 0;
    std::size_t listener = 0;
    std::size_t channel = 0;
};

struct ProtocolReport {
    CommMatrix comm;
    double communication_loss = 0.0;
    std::vector<CurvePoint> curves;
    std::vector<UsageLedger> usage;                ///< per agent
    std::vector<std::vector<double>> quant_loss;   ///< per agent, per epoch
    std::vector<DistancePoint> distances;          ///< codebook ED_Average per epoch
    std::vector<CodebookSnapshot> snapshots;
    std::vector<PairDraw> pairs;                   ///< cross-training draws
    std::vector<Agent> agents;                     ///< final, frozen
};

inline std::vector<Agent> make_agents(const ExperimentConfig& cfg, std::size_t input_dim) {
    std::vector<Agent> agents;
    const AgentConfig acfg = cfg.agent_config(input_dim);
    for (std::size_t j = 0; j < cfg.agents; ++j) {
        agents.push_back(Agent::create(j, acfg, agent_seed(cfg.seed, j)));
    }
    return agents;
}

namespace detail {

inline void record_codebooks(ProtocolReport& r, std::size_t epoch, bool snapshot) {
    if (r.agents.empty() || !r.agents.front().codebook) return;
    std::vector<Matrix> codes;
    for (const auto& a : r.agents) codes.push_back(a.codebook->codes);
    if (codes.size() >= 2) {
        r.distances.push_back({epoch, pairwise_codebook_distance(std::span<const Matrix>(codes))});
    }
    if (snapshot) {
        for (std::size_t j = 0; j < codes.size(); ++j) r.snapshots.push_back({epoch, j, codes[j]});
    }
}

inline CrossValidationOptions cv_options(const ExperimentConfig& cfg) {
    return {cfg.quantizer_side, cfg.mode, cfg.workers};
}

}  // namespace detail

/// Trains `agents` in place, agent j on data.train_sets[j], then scores every pair.
inline ProtocolReport run_individual_training(const ExperimentConfig& cfg,
                                              const AgentDatasets& data,
                                              std::vector<Agent> agents) {
    const std::size_t m = agents.size();
    if (data.train_sets.size() != m) {
        throw ConfigError("run_individual_training: " + std::to_string(data.train_sets.size()) +
                          " train sets for " + std::to_string(m) + " agents");
    }
    ProtocolReport r;
    r.agents = std::move(agents);
    r.usage.resize(m);
    r.quant_loss.resize(m);
    std::vector<Rng> rngs;
    for (std::size_t j = 0; j < m; ++j) {
        rngs.push_back(make_stream(agent_seed(cfg.seed, j), "shuffle"));
    }

    const auto snap = [&](std::size_t epoch) {
        return epoch == cfg.epochs ||
               (cfg.snapshot_cadence > 0 && epoch % cfg.snapshot_cadence == 0);
    };
    detail::record_codebooks(r, 0, snap(0));

    std::vector<EpochMetrics> metrics(m);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        detail::parallel_for(m, cfg.workers, [&](std::size_t j) {
            try {
                metrics[j] = train_epoch(r.agents[j], data.train_sets[j].features, cfg.batch_size,
                                         cfg.lr, rngs[j]);
            } catch (const NumericalError& e) {
                throw NumericalError("diverged: agent " + std::to_string(j) + ", epoch " +
                                     std::to_string(epoch) + ": " + e.what());
            }
        });
        for (std::size_t j = 0; j < m; ++j) {
            const EpochMetrics& em = metrics[j];
            r.curves.push_back({epoch, j, "recon_mse", em.recon});
            r.curves.push_back({epoch, j, "codebook", em.codebook});
            r.curves.push_back({epoch, j, "commitment", em.commitment});
            r.curves.push_back({epoch, j, "kl", em.kl});
            r.curves.push_back({epoch, j, "total", em.total()});
            if (uses_quantizer(cfg.channel)) {
                r.usage[j].record(epoch, em.batch_usage, cfg.usage_detail);
                r.quant_loss[j].push_back(em.quantization());
            }
        }
        detail::record_codebooks(r, epoch, snap(epoch));
    }

    r.comm = cross_validate(r.agents, data.val_set, detail::cv_options(cfg));
    r.communication_loss = m >= 2 ? communication_loss(r.comm) : 0.0;
    return r;
}

inline ProtocolReport run_individual_training(const ExperimentConfig& cfg,
                                              const AgentDatasets& data) {
    if (data.train_sets.empty()) throw ConfigError("run_individual_training: no train sets");
    return run_individual_training(cfg, data, make_agents(cfg, data.train_sets.front().dim()));
}

/// Mean internal (self) reconstruction loss of every agent on `val`.
inline std::vector<double> internal_test_losses(std::span<const Agent> agents, const Matrix& val,
                                                ValidationMode mode) {
    std::vector<double> out;
    for (const auto& a : agents) out.push_back(evaluate_exchange(a, a, a, val, mode));
    return out;
}

/// `train` is shared by every agent. Iteration counts start at 1; internal test
/// losses are recorded at iteration 0 and every cfg.eval_every iterations.
inline ProtocolReport run_cross_training(const ExperimentConfig& cfg, const LabeledDataset& train,
                                         const LabeledDataset& val, std::vector<Agent> agents) {
    const std::size_t m = agents.size();
    if (m < 2) throw UsageError("run_cross_training: need m >= 2 agents");
    if (train.size() == 0) throw UsageError("run_cross_training: empty training set");
    ProtocolReport r;
    r.agents = std::move(agents);
    Rng pick = make_stream(cfg.seed, "cross_training");
    Rng noise = make_stream(cfg.seed, "cross_training_noise");
    Rng order_rng = make_stream(cfg.seed, "cross_training_batches");
    const bool has_channel = cfg.channel != ChannelKind::ae;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), order_rng);
    std::size_t cursor = 0;

    const auto evaluate = [&](std::size_t iteration) {
        auto losses = internal_test_losses(r.agents, val.features, cfg.mode);
        for (std::size_t j = 0; j < m; ++j) {
            r.curves.push_back({iteration, j, "internal_test", losses[j]});
        }
        detail::record_codebooks(r, iteration, false);
    };
    evaluate(0);

    std::uniform_int_distribution<std::size_t> speaker_dist(0, m - 1);
    std::uniform_int_distribution<std::size_t> other_dist(0, m - 2);
    std::bernoulli_distribution coin(0.5);
    const std::size_t batch = std::min(cfg.batch_size, train.size());
    std::vector<std::size_t> rows(batch);
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), order_rng);
                cursor = 0;
            }
            rows[b] = order[cursor++];
        }
        const Matrix x = gather_rows(train.features, rows);

        const std::size_t i = speaker_dist(pick);
        std::size_t k = other_dist(pick);
        if (k >= i) ++k;
        const std::size_t c = has_channel ? (coin(pick) ? i : k) : i;
        r.pairs.push_back({i, k, c});
        try {
            train_step(r.agents[i], r.agents[c], r.agents[k], x, cfg.lr, noise);
        } catch (const NumericalError& e) {
            throw NumericalError("diverged at iteration " + std::to_string(it) + ": " + e.what());
        }
        if (it % cfg.eval_every == 0 || it == cfg.iterations) evaluate(it);
    }

    r.comm = cross_validate(r.agents, val, detail::cv_options(cfg));
    r.communication_loss = communication_loss(r.comm);
    return r;
}

inline ProtocolReport run_cross_training(const ExperimentConfig& cfg, const LabeledDataset& train,
                                         const LabeledDataset& val) {
    return run_cross_training(cfg, train, val, make_agents(cfg, train.dim()));
}

}  // namespace vqcomm
