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

// Acceptance suite. One criterion (or the shared A5_A8 group) per invocation:
//
//   acceptance A1|A2|A3|A4|A5_A8|A9|A10|A11
//
// Prints one "<id> PASS|FAIL <detail>" line per criterion and exits 1 if any
// of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/gradcheck.hpp"
#include "support/testing.hpp"
#include "vqcomm/vqcomm.hpp"

namespace {

using namespace vqcomm;
using Clock = std::chrono::steady_clock;

// Tolerances and budgets.
constexpr double kA1Seconds = 5.0;
constexpr double kA2RelativeError = 1e-4;
constexpr std::size_t kA2InstancesPerPath = 100;
constexpr double kA2Seconds = 30.0;
constexpr double kA3Absolute = 1e-9;
constexpr double kA3Invariance = 1e-6;
constexpr double kA58Seconds = 600.0;
constexpr std::size_t kA58SeedsNeeded = 4;
constexpr double kA9Ratio = 0.5;
constexpr double kA9Seconds = 120.0;
constexpr double kA11Absolute = 1e-12;
const std::vector<std::uint64_t> kTrendSeeds{1000, 2000, 3000, 4000, 5000};

bool g_all_passed = true;

void report(const std::string& id, bool pass, const std::string& detail) {
    std::cout << id << (pass ? " PASS " : " FAIL ") << detail << std::endl;
    g_all_passed = g_all_passed && pass;
}

double since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// First strict minimum of squared distance over all codes, per segment.
std::vector<std::size_t> brute_force_indices(const std::vector<double>& z, const Matrix& codes,
                                             std::size_t n) {
    const std::size_t d = z.size() / n;
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < n; ++t) {
        std::size_t best = 0;
        double best_d = 0.0;
        for (std::size_t j = 0; j < codes.rows(); ++j) {
            double dist = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = z[t * d + k] - codes(j, k);
                dist += diff * diff;
            }
            if (j == 0 || dist < best_d) {
                best = j;
                best_d = dist;
            }
        }
        out.push_back(best);
    }
    return out;
}

void a1() {
    const auto start = Clock::now();
    Rng rng(2024);
    std::uniform_int_distribution<std::size_t> pick_l(1, 32), pick_d(1, 16), pick_n(0, 3);
    const std::size_t tokens[] = {1, 2, 4, 8};
    std::size_t index_mismatch = 0, roundtrip_mismatch = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t l = pick_l(rng), d = pick_d(rng), n = tokens[pick_n(rng)];
        const auto cb = Codebook::from_codes(testing::random_matrix(l, d, rng));
        const Matrix zm = testing::random_matrix(1, n * d, rng);
        const std::vector<double> z(zm.values().begin(), zm.values().end());
        QuantizerConfig qc;
        qc.num_tokens = n;
        qc.latent_dim = n * d;
        if (quantize(z, cb, qc).indices != brute_force_indices(z, cb.codes, n)) ++index_mismatch;
        if (concat_segments(split_latent(z, n)) != z) ++roundtrip_mismatch;
    }
    const double secs = since(start);
    report("A1", index_mismatch == 0 && roundtrip_mismatch == 0 && secs < kA1Seconds,
           "1000 instances: index mismatches " + std::to_string(index_mismatch) +
               ", split/concat mismatches " + std::to_string(roundtrip_mismatch) + ", " +
               fmt(secs, 3) + " s (budget " + fmt(kA1Seconds) + " s)");
}

void a2() {
    const auto start = Clock::now();
    Rng rng(77);
    double worst = 0.0;
    std::string worst_where;
    std::size_t instances = 0, failing = 0, checked = 0;
    for (auto kind : {ChannelKind::ae, ChannelKind::vq, ChannelKind::vae, ChannelKind::hybrid_split,
                      ChannelKind::mask_discrete, ChannelKind::mask_continuous}) {
        for (std::size_t i = 0; i < kA2InstancesPerPath; ++i) {
            auto inst = testing::draw_gradcheck_instance(kind, rng);
            const auto r = testing::check_agent_gradients(inst.agent, inst.x,
                                                          ValidationMode::integrated, inst.noise_seed);
            ++instances;
            checked += r.checked;
            if (r.max_error >= kA2RelativeError) ++failing;
            if (r.max_error > worst) {
                worst = r.max_error;
                worst_where = std::string(to_string(kind)) + ":" + r.worst;
            }
        }
    }
    const double secs = since(start);
    report("A2", failing == 0 && secs < kA2Seconds,
           std::to_string(instances) + " instances (" + std::to_string(kA2InstancesPerPath) +
               " per channel), " + std::to_string(checked) + " partials, max relative error " +
               fmt(worst, 3) + " at " + worst_where + " (tol " + fmt(kA2RelativeError) + "), " +
               std::to_string(failing) + " failing, " + fmt(secs, 3) + " s");
}

// counts <- d counts + (1 - d) n, sums <- d sums + (1 - d) S, codes = sums / (counts + eps).
struct HandEma {
    std::vector<double> counts;
    std::vector<std::vector<double>> sums;

    std::vector<double> code(std::size_t i) const {
        std::vector<double> c(sums[i]);
        for (double& v : c) v /= counts[i] + 1e-5;
        return c;
    }
    void step(const std::vector<std::pair<std::size_t, std::vector<double>>>& batch, double d) {
        std::vector<double> n(counts.size(), 0.0);
        std::vector<std::vector<double>> s(sums.size(), std::vector<double>(sums[0].size(), 0.0));
        for (const auto& [idx, seg] : batch) {
            n[idx] += 1.0;
            for (std::size_t k = 0; k < seg.size(); ++k) s[idx][k] += seg[k];
        }
        for (std::size_t i = 0; i < counts.size(); ++i) {
            counts[i] = d * counts[i] + (1.0 - d) * n[i];
            for (std::size_t k = 0; k < sums[i].size(); ++k) {
                sums[i][k] = d * sums[i][k] + (1.0 - d) * s[i][k];
            }
        }
    }
};

void a3() {
    Rng rng(31);
    const std::size_t l = 8, d = 3;
    Codebook cb = Codebook::uniform(l, d, rng);
    HandEma hand{cb.ema_counts, {}};
    for (std::size_t i = 0; i < l; ++i) {
        hand.sums.emplace_back(cb.ema_sums.row(i).begin(), cb.ema_sums.row(i).end());
    }
    std::uniform_int_distribution<std::size_t> batch_size(0, 12), pick(0, l - 1);
    std::uniform_real_distribution<double> value(-1.0, 1.0), decay(0.5, 0.999);
    double max_err = 0.0;
    std::size_t empty_steps = 0;
    for (int step = 0; step < 50; ++step) {
        const std::size_t b = step % 7 == 0 ? 0 : batch_size(rng);
        empty_steps += b == 0;
        std::vector<std::pair<std::size_t, std::vector<double>>> batch;
        for (std::size_t i = 0; i < b; ++i) {
            std::vector<double> seg(d);
            for (double& v : seg) v = value(rng);
            batch.emplace_back(pick(rng), seg);
        }
        std::vector<Assignment> assignments;
        for (const auto& [idx, seg] : batch) assignments.push_back({idx, seg});
        const double dk = decay(rng);
        ema_update(cb, assignments, dk);
        hand.step(batch, dk);
        for (std::size_t i = 0; i < l; ++i) {
            max_err = std::max(max_err, std::abs(cb.ema_counts[i] - hand.counts[i]));
            const auto c = hand.code(i);
            for (std::size_t k = 0; k < d; ++k) {
                max_err = std::max(max_err, std::abs(cb.codes(i, k) - c[k]));
                max_err = std::max(max_err, std::abs(cb.ema_sums(i, k) - hand.sums[i][k]));
            }
        }
    }

    // No assignments anywhere: codes hold still up to the epsilon in the denominator.
    Codebook still = Codebook::uniform(16, 4, rng);
    const Matrix before = still.codes;
    HandEma idle{still.ema_counts, {}};
    for (std::size_t i = 0; i < 16; ++i) {
        idle.sums.emplace_back(still.ema_sums.row(i).begin(), still.ema_sums.row(i).end());
    }
    double idle_err = 0.0, drift = 0.0;
    for (int step = 0; step < 50; ++step) {
        ema_update(still, {}, 0.99);
        idle.step({}, 0.99);
    }
    for (std::size_t i = 0; i < 16; ++i) {
        const auto c = idle.code(i);
        for (std::size_t k = 0; k < 4; ++k) {
            idle_err = std::max(idle_err, std::abs(still.codes(i, k) - c[k]));
            drift = std::max(drift, std::abs(still.codes(i, k) - before(i, k)));
        }
    }
    report("A3", max_err <= kA3Absolute && idle_err <= kA3Absolute && drift <= kA3Invariance,
           "50 random steps (" + std::to_string(empty_steps) + " empty): max |lib - hand| " +
               fmt(max_err, 3) + "; 50 idle steps: |lib - hand| " + fmt(idle_err, 3) +
               ", code drift " + fmt(drift, 3) + " (tol " + fmt(kA3Absolute) + " / " +
               fmt(kA3Invariance) + ")");
}

void a4() {
    std::size_t combos = 0, ratio_misses = 0, split_failures = 0;
    double worst_scaled = 0.0;
    std::string worst_where;
    for (std::size_t m : {2u, 5u, 10u}) {
        for (std::size_t p_train : {500u, 5000u}) {
            // Class size chosen so that a 10% validation slice leaves exactly p_train.
            std::size_t class_size = p_train;
            while (class_size - static_cast<std::size_t>(std::floor(0.1 * class_size)) < p_train) {
                ++class_size;
            }
            const auto ds = synth_dataset(9, m, class_size, 8, 0.05);
            for (int step = 1; step <= 18; ++step) {
                const double p = 0.05 * step;
                ++combos;
                const std::size_t s = overlap_count(p_train, m, p);
                const double md = static_cast<double>(m), sd = static_cast<double>(s);
                const double r = md * sd / (static_cast<double>(p_train) + (md - 1.0) * sd);
                const double scaled = std::abs(r - p) * static_cast<double>(p_train);
                if (scaled > 1.0) ++ratio_misses;
                if (scaled > worst_scaled) {
                    worst_scaled = scaled;
                    worst_where = "m=" + std::to_string(m) + " p=" + fmt(p, 2) +
                                  " P=" + std::to_string(p_train) + " s=" + std::to_string(s);
                }

                const auto plan = OverlapPlan::make(m, p, class_size, 0.1);
                const auto data = build_agent_datasets(ds, plan, 13);
                bool ok = plan.p_train == p_train && plan.s == s;
                const std::set<std::uint64_t> val(data.val_set.ids.begin(), data.val_set.ids.end());
                for (std::size_t i = 0; i < m; ++i) {
                    const auto& t = data.train_sets[i];
                    std::size_t foreign = 0;
                    for (std::size_t k = 0; k < t.size(); ++k) {
                        ok = ok && !val.contains(t.ids[k]);
                        foreign += t.labels[k] != i;
                    }
                    ok = ok && foreign == (m - 1) * s;
                }
                split_failures += !ok;
            }
        }
    }
    report("A4", ratio_misses == 0 && split_failures == 0,
           std::to_string(combos) + " (p, m, P_train) combos: " + std::to_string(ratio_misses) +
               " outside 1/P_train (worst |r - p| = " + fmt(worst_scaled, 3) + "/P_train at " +
               worst_where + "); val/train id overlap or foreign-count errors in " +
               std::to_string(split_failures));
}

ExperimentConfig desk_config() {
    return parse_config(std::filesystem::path(VQCOMM_CONFIG_DIR) / "desk_default.ini");
}

struct TrendRun {
    double comm = 0.0;
    double utilization = 0.0;
    double ed_first = 0.0;
    double ed_final = 0.0;
};

TrendRun trend_run(ExperimentConfig cfg) {
    const auto r = run_protocol(cfg, build_datasets(cfg));
    TrendRun t;
    t.comm = r.communication_loss;
    if (uses_quantizer(cfg.channel)) {
        for (const auto& u : r.usage) t.utilization += u.mean_batch_utilization.back();
        t.utilization /= static_cast<double>(r.usage.size());
        for (const auto& d : r.distances) {
            if (d.epoch == 1) t.ed_first = d.value;
        }
        t.ed_final = r.distances.back().value;
    }
    return t;
}

void a5_a8() {
    const auto start = Clock::now();
    std::size_t a5 = 0, a6 = 0, a7 = 0, a8 = 0;
    std::ostringstream d5, d6, d7, d8;
    for (auto seed : kTrendSeeds) {
        ExperimentConfig base = desk_config();
        base.seed = seed;
        ExperimentConfig ae = base, vq8 = base, vq1 = base;
        ae.channel = ChannelKind::ae;
        vq8.tokens = 8;
        vq1.tokens = 1;
        const TrendRun r_ae = trend_run(ae), r8 = trend_run(vq8), r1 = trend_run(vq1);
        a5 += r8.comm < r_ae.comm;
        a6 += r8.comm < r1.comm;
        a7 += r8.utilization >= r1.utilization;
        a8 += r8.ed_final < r8.ed_first;
        d5 << " " << seed << ":" << fmt(r8.comm) << "<" << fmt(r_ae.comm);
        d6 << " " << seed << ":" << fmt(r8.comm) << "<" << fmt(r1.comm);
        d7 << " " << seed << ":" << fmt(r8.utilization, 3) << ">=" << fmt(r1.utilization, 3);
        d8 << " " << seed << ":" << fmt(r8.ed_final) << "<" << fmt(r8.ed_first);
    }
    const double secs = since(start);
    const std::string n = std::to_string(kTrendSeeds.size());
    const bool in_budget = secs < kA58Seconds;
    report("A5", a5 >= kA58SeedsNeeded && in_budget,
           "VQ(N=8) < AE comm loss on " + std::to_string(a5) + "/" + n + " seeds;" + d5.str() +
               "; all 15 runs " + fmt(secs, 3) + " s (budget " + fmt(kA58Seconds) + " s)");
    report("A6", a6 >= kA58SeedsNeeded,
           "VQ(N=8) < VQ(N=1) comm loss on " + std::to_string(a6) + "/" + n + " seeds;" + d6.str());
    report("A7", a7 >= kA58SeedsNeeded,
           "final utilization N=8 >= N=1 on " + std::to_string(a7) + "/" + n + " seeds;" + d7.str());
    report("A8", a8 >= kA58SeedsNeeded,
           "ED_Average final < epoch 1 on " + std::to_string(a8) + "/" + n + " seeds;" + d8.str());
}

void a9() {
    const ExperimentConfig cfg = desk_config();
    const auto data = build_datasets(cfg);
    Agent a = Agent::create(0, cfg.agent_config(data.train_sets[0].dim()), 1000);
    Rng rng(1001);
    const auto start = Clock::now();
    double first = 0.0, last = 0.0;
    for (std::size_t e = 1; e <= 30; ++e) {
        const auto em = train_epoch(a, data.train_sets[0].features, cfg.batch_size, cfg.lr, rng);
        if (e == 1) first = em.recon;
        last = em.recon;
    }
    const double secs = since(start);
    report("A9", last < kA9Ratio * first && secs < kA9Seconds,
           "recon epoch 1 " + fmt(first) + ", epoch 30 " + fmt(last) + " (ratio " +
               fmt(last / first, 3) + ", need < " + fmt(kA9Ratio) + "), " + fmt(secs, 3) +
               " s (budget " + fmt(kA9Seconds) + " s)");
}

std::map<std::string, std::string> report_bytes(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    auto manifest = nlohmann::ordered_json::parse(testing::slurp(dir / "manifest.json"));
    for (const auto& f : manifest["files"]) {
        const std::string rel = f.get<std::string>();
        out[rel] = testing::slurp(dir / rel);
    }
    manifest.erase("wall_clock_seconds");
    out["manifest.json"] = manifest.dump();
    return out;
}

void a10() {
    std::size_t combos = 0, failures = 0;
    std::string failed;
    for (auto protocol : {Protocol::individual, Protocol::cross_training}) {
        for (auto kind : {ChannelKind::ae, ChannelKind::vq, ChannelKind::vae,
                          ChannelKind::hybrid_split, ChannelKind::mask_discrete,
                          ChannelKind::mask_continuous}) {
            ExperimentConfig cfg;
            cfg.protocol = protocol;
            cfg.channel = kind;
            cfg.agents = 3;
            cfg.seed = 42;
            cfg.latent_dim = 8;
            cfg.hidden = 16;
            cfg.tokens = 2;
            cfg.codebook_size = 8;
            cfg.epochs = 3;
            cfg.iterations = 60;
            cfg.batch_size = 16;
            cfg.side = 8;
            cfg.n_per_class = 40;
            cfg.usage_detail = true;
            const std::string name = std::string(to_string(protocol)) + "_" + std::string(to_string(kind));
            cfg.output_dir = testing::scratch_dir("acceptance_a10_" + name).string();
            std::ostringstream diag;
            ++combos;
            const auto r1 = run(cfg, diag);
            const auto first = report_bytes(cfg.output_dir);
            const auto r2 = run(cfg, diag);
            const auto second = report_bytes(cfg.output_dir);
            const bool ok = r1.exit_code == kExitOk && r2.exit_code == kExitOk &&
                            first.size() > 3 && first == second;
            if (!ok) {
                ++failures;
                failed += " " + name;
            }
        }
    }
    report("A10", failures == 0,
           std::to_string(combos) + " protocol/channel configs rerun with the same seed; " +
               std::to_string(failures) + " differ" + failed);
}

void a11() {
    std::vector<std::pair<std::string, double>> errors;

    const Matrix ones(2, 2, 1.0), zeros(2, 2, 0.0);
    const std::vector<Matrix> same{ones, ones, ones};
    errors.emplace_back("ED identical", std::abs(pairwise_codebook_distance(same)));
    const std::vector<Matrix> pair{zeros, ones};
    errors.emplace_back("ED 2x2", std::abs(pairwise_codebook_distance(pair) - 2.0));

    errors.emplace_back("uniform variance", std::abs(usage_variance(UsageCounts{5, 5, 5, 5})));

    AgentConfig c;
    c.input_dim = 6;
    c.hidden_dim = 5;
    c.latent_dim = 4;
    c.channel = ChannelKind::vae;
    Agent a = Agent::create(0, c, 3);
    for (auto* head : {&a.vae->mean, &a.vae->log_var}) {
        for (double& w : head->weights.values()) w = 0.0;
        for (double& b : head->bias) b = 0.0;
    }
    Rng rng(5);
    errors.emplace_back("KL(0,1)", std::abs(forward_vae(a, testing::random_matrix(3, 6, rng), nullptr).kl));

    QuantizerConfig qc;
    qc.num_tokens = 1;
    qc.latent_dim = 2;
    const auto r = quantize(std::vector<double>{1.0, 0.0}, Codebook::from_codes(Matrix{{0.0, 0.0}}), qc);
    errors.emplace_back("quantization loss", std::abs(quantization_loss(r, 0.25) - 1.25));

    bool ok = true;
    std::string detail;
    for (const auto& [name, e] : errors) {
        ok = ok && e <= kA11Absolute;
        detail += (detail.empty() ? "" : ", ") + name + " err " + fmt(e, 3);
    }
    report("A11", ok, detail + " (tol " + fmt(kA11Absolute) + ")");
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<void()>> criteria{
        {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5_A8", a5_a8},
        {"A9", a9}, {"A10", a10}, {"A11", a11}};
    std::vector<std::string> wanted(argv + 1, argv + argc);
    if (wanted.empty()) {
        for (const auto& [id, fn] : criteria) wanted.push_back(id);
    }
    for (const auto& id : wanted) {
        const auto it = criteria.find(id);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << id << "\n";
            return 2;
        }
        try {
            it->second();
        } catch (const std::exception& e) {
            report(id, false, std::string("threw: ") + e.what());
        }
    }
    return g_all_passed ? 0 : 1;
}
