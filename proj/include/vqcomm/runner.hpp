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

// End-to-end runs: build the data, train, score, write every report.
//
// Output directory layout:
//
//   config.ini                     resolved config (reparses to the same config)
//   comm_matrix.csv                speaker,listener_0..listener_{m-1}
//   loss_curves.csv                epoch,agent,component,value
//   usage_agent<j>.csv             epoch,code_index,count
//   usage_detail_agent<j>.csv      epoch,batch,code_index,count  (train.usage_detail)
//   utilization_agent<j>.csv       epoch,N,value
//   usage_variance_agent<j>.csv    epoch,N,value
//   quant_loss_agent<j>.csv        epoch,N,value
//   distances.csv                  epoch,ED_Average
//   codebooks/agent<j>_epoch<e>.csv
//   checkpoints/agent<j>.ckpt
//   data/images.idx, data/labels.idx  (data.export_idx)
//   manifest.json                  written last; the only file with a timestamp
//
// Every CSV is a pure function of the config.

#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqcomm/analytics.hpp"
#include "vqcomm/checkpoint.hpp"
#include "vqcomm/config.hpp"
#include "vqcomm/data.hpp"
#include "vqcomm/protocols.hpp"
#include "vqcomm/version.hpp"

namespace vqcomm {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Git blob id of `content`: sha1("blob <len>\0" + content), lowercase hex.
inline std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw Error("git_blob_hash: EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error("git_blob_hash: digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

/// Hash of the config with run-identity fields (seed, output dir, worker count)
/// neutralized; runs that differ only in seed share it.
inline std::string config_group_key(ExperimentConfig cfg) {
    cfg.seed = 0;
    cfg.output_dir = "-";
    cfg.workers = 1;
    return git_blob_hash(emit_config(cfg));
}

/// Synthetic or IDX data, split per the protocol.
inline AgentDatasets build_datasets(const ExperimentConfig& cfg, std::size_t* image_side = nullptr) {
    LabeledDataset ds;
    if (cfg.source == DataSource::synthetic) {
        ds = synth_dataset(cfg.seed, cfg.agents, cfg.n_per_class, cfg.side, cfg.noise);
        if (image_side) *image_side = cfg.side;
    } else {
        ds = load_idx(cfg.images, cfg.labels);
        if (ds.num_classes != cfg.agents) {
            throw ConfigError("experiment.agents: idx data has " + std::to_string(ds.num_classes) +
                              " classes, need one per agent (" + std::to_string(cfg.agents) + ")");
        }
        if (image_side) *image_side = static_cast<std::size_t>(std::lround(std::sqrt(ds.dim())));
    }
    if (cfg.protocol == Protocol::cross_training) {
        return build_shared_datasets(ds, cfg.val_fraction, cfg.agents, cfg.seed);
    }
    auto classes = partition_by_class(ds);
    std::size_t smallest = classes.front().size();
    for (const auto& c : classes) smallest = std::min(smallest, c.size());
    const OverlapPlan plan = OverlapPlan::make(cfg.agents, cfg.overlap, smallest, cfg.val_fraction);
    return build_agent_datasets(ds, plan, cfg.seed);
}

inline ProtocolReport run_protocol(const ExperimentConfig& cfg, const AgentDatasets& data) {
    if (cfg.protocol == Protocol::cross_training) {
        return run_cross_training(cfg, data.train_sets.front(), data.val_set);
    }
    return run_individual_training(cfg, data);
}

// ---- CSV writers -------------------------------------------------------------

inline std::string comm_matrix_csv(const CommMatrix& cm) {
    std::string out = "speaker";
    for (std::size_t k = 0; k < cm.m; ++k) out += ",listener_" + std::to_string(k);
    out += '\n';
    for (std::size_t j = 0; j < cm.m; ++j) {
        out += std::to_string(j);
        for (std::size_t k = 0; k < cm.m; ++k) out += "," + format_real(cm.losses(j, k));
        out += '\n';
    }
    return out;
}

inline CommMatrix read_comm_matrix(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(f, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        rows.push_back(std::move(row));
    }
    CommMatrix cm{rows.size(), Matrix(rows.size(), rows.size())};
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (rows[j].size() != rows.size()) throw ParseError(path.string() + ": matrix is not square");
        for (std::size_t k = 0; k < rows.size(); ++k) cm.losses(j, k) = rows[j][k];
    }
    return cm;
}

inline std::string curves_csv(const std::vector<CurvePoint>& curves) {
    std::string out = "epoch,agent,component,value\n";
    for (const auto& c : curves) {
        out += std::to_string(c.epoch) + "," + std::to_string(c.agent) + "," + c.component + "," +
               format_real(c.value) + "\n";
    }
    return out;
}

inline std::string series_csv(const std::vector<std::size_t>& epochs,
                              const std::vector<double>& values, std::size_t tokens) {
    std::string out = "epoch,N,value\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += std::to_string(epochs[i]) + "," + std::to_string(tokens) + "," +
               format_real(values[i]) + "\n";
    }
    return out;
}

inline std::string usage_csv(const UsageLedger& u) {
    std::string out = "epoch,code_index,count\n";
    for (std::size_t e = 0; e < u.epochs.size(); ++e) {
        for (std::size_t i = 0; i < u.epoch_counts[e].size(); ++i) {
            out += std::to_string(u.epochs[e]) + "," + std::to_string(i) + "," +
                   std::to_string(u.epoch_counts[e][i]) + "\n";
        }
    }
    return out;
}

inline std::string usage_detail_csv(const UsageLedger& u) {
    std::string out = "epoch,batch,code_index,count\n";
    for (std::size_t e = 0; e < u.batch_counts.size(); ++e) {
        for (std::size_t b = 0; b < u.batch_counts[e].size(); ++b) {
            const auto& counts = u.batch_counts[e][b];
            for (std::size_t i = 0; i < counts.size(); ++i) {
                out += std::to_string(u.epochs[e]) + "," + std::to_string(b) + "," +
                       std::to_string(i) + "," + std::to_string(counts[i]) + "\n";
            }
        }
    }
    return out;
}

inline std::string distances_csv(const std::vector<DistancePoint>& d) {
    std::string out = "epoch,ED_Average\n";
    for (const auto& p : d) out += std::to_string(p.epoch) + "," + format_real(p.value) + "\n";
    return out;
}

namespace detail {

class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path root) : root_(std::move(root)) {}

    void text(const std::string& rel, const std::string& content) {
        const auto path = root_ / rel;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + path.string());
        f << content;
        if (!f) throw IoError("write failed for " + path.string());
        files_.push_back(rel);
    }
    void added(const std::string& rel) { files_.push_back(rel); }
    const std::filesystem::path& root() const { return root_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    std::filesystem::path root_;
    std::vector<std::string> files_;
};

}  // namespace detail

inline void write_report(const ExperimentConfig& cfg, const ProtocolReport& r,
                         detail::ArtifactWriter& w) {
    w.text("comm_matrix.csv", comm_matrix_csv(r.comm));
    w.text("loss_curves.csv", curves_csv(r.curves));
    for (std::size_t j = 0; j < r.usage.size(); ++j) {
        const UsageLedger& u = r.usage[j];
        if (u.epochs.empty()) continue;
        const std::string suffix = "agent" + std::to_string(j) + ".csv";
        w.text("usage_" + suffix, usage_csv(u));
        if (cfg.usage_detail) w.text("usage_detail_" + suffix, usage_detail_csv(u));
        w.text("utilization_" + suffix, series_csv(u.epochs, u.mean_batch_utilization, cfg.tokens));
        w.text("usage_variance_" + suffix, series_csv(u.epochs, u.mean_batch_variance, cfg.tokens));
        const auto ql = track_quantization_loss(r.quant_loss[j], cfg.tokens);
        std::vector<std::size_t> ep;
        std::vector<double> vals;
        for (const auto& p : ql) {
            ep.push_back(p.epoch);
            vals.push_back(p.value);
        }
        w.text("quant_loss_" + suffix, series_csv(ep, vals, cfg.tokens));
    }
    if (!r.distances.empty()) w.text("distances.csv", distances_csv(r.distances));
    for (const auto& s : r.snapshots) {
        w.text("codebooks/agent" + std::to_string(s.agent) + "_epoch" + std::to_string(s.epoch) +
                   ".csv",
               codebook_csv(s.codes));
    }
    for (const auto& a : r.agents) {
        const std::string rel = "checkpoints/agent" + std::to_string(a.id) + ".ckpt";
        std::filesystem::create_directories((w.root() / rel).parent_path());
        save_agent(a, w.root() / rel);
        w.added(rel);
    }
}

struct RunResult {
    int exit_code = kExitOk;
    double communication_loss = 0.0;
    std::string error;
};

/// Runs one experiment and writes its outputs under cfg.output_dir.
/// Errors never escape: they map to exit codes and a flagged manifest.
inline RunResult run(const ExperimentConfig& cfg, std::ostream& diag = std::cerr) {
    const auto start = std::chrono::steady_clock::now();
    RunResult result;
    try {
        validate(cfg);
    } catch (const ConfigError& e) {
        diag << "error: " << e.what() << "\n";
        return {kExitValidation, 0.0, e.what()};
    }

    const std::filesystem::path root = cfg.output_dir;
    detail::ArtifactWriter w(root);
    std::string status = "complete";
    try {
        std::filesystem::create_directories(root);
        w.text("config.ini", emit_config(cfg));
        std::size_t side = 0;
        const AgentDatasets data = build_datasets(cfg, &side);
        if (cfg.export_idx && cfg.source == DataSource::synthetic) {
            std::filesystem::create_directories(root / "data");
            write_idx(synth_dataset(cfg.seed, cfg.agents, cfg.n_per_class, cfg.side, cfg.noise),
                      side, side, root / "data/images.idx", root / "data/labels.idx");
            w.added("data/images.idx");
            w.added("data/labels.idx");
        }
        const ProtocolReport report = run_protocol(cfg, data);
        write_report(cfg, report, w);
        result.communication_loss = report.communication_loss;
    } catch (const ConfigError& e) {
        result = {kExitValidation, 0.0, e.what()};
    } catch (const std::exception& e) {
        result = {kExitRuntime, 0.0, e.what()};
    }
    if (result.exit_code != kExitOk) {
        status = "partial";
        diag << "error: " << result.error << "\n";
    }

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    nlohmann::ordered_json manifest;
    manifest["library_version"] = kVersionString;
    manifest["status"] = status;
    if (!result.error.empty()) manifest["error"] = result.error;
    manifest["config_hash"] = git_blob_hash(emit_config(cfg));
    manifest["config_group"] = config_group_key(cfg);
    manifest["seed"] = cfg.seed;
    manifest["communication_loss"] = result.communication_loss;
    manifest["wall_clock_seconds"] = seconds;
    manifest["files"] = w.files();
    manifest["config"] = emit_config(cfg);
    try {
        std::filesystem::create_directories(root);
        std::ofstream f(root / "manifest.json", std::ios::trunc);
        f << manifest.dump(2) << "\n";
        if (!f) throw IoError("cannot write manifest");
    } catch (const std::exception& e) {
        diag << "error: " << e.what() << "\n";
        if (result.exit_code == kExitOk) result = {kExitRuntime, 0.0, e.what()};
    }
    return result;
}

/// One run per value of `key`, each in <output_dir>/<key-with-dots-as-underscores>_<value>.
inline int sweep(const ExperimentConfig& base, const std::string& key,
                 const std::vector<std::string>& values, std::ostream& diag = std::cerr) {
    if (values.empty()) {
        diag << "error: sweep needs at least one value\n";
        return kExitValidation;
    }
    std::vector<ExperimentConfig> configs;
    std::string stem = key;
    for (char& c : stem) c = c == '.' ? '_' : c;
    // Validate every point before running any.
    try {
        for (const auto& v : values) {
            ConfigBuilder b;
            b.load_text(emit_config(base));
            b.set(key, v);
            b.set("experiment.output_dir",
                  (std::filesystem::path(base.output_dir) / (stem + "_" + v)).string());
            configs.push_back(b.finish());
        }
    } catch (const ConfigError& e) {
        diag << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    int worst = kExitOk;
    for (const auto& c : configs) worst = std::max(worst, run(c, diag).exit_code);
    return worst;
}

struct CompareRow {
    std::string dir;
    std::string group;
    std::uint64_t seed = 0;
    double communication_loss = 0.0;
    double diff_vs_first = 0.0;
};

struct CompareGroup {
    std::string group;
    std::size_t runs = 0;
    double mean = 0.0;
    double stddev = 0.0;  ///< population
};

struct CompareTable {
    std::vector<CompareRow> rows;
    std::vector<CompareGroup> groups;  ///< in first-appearance order

    std::string to_csv() const {
        std::string out = "kind,dir,config_group,seed,runs,communication_loss,stddev,diff_vs_first\n";
        for (const auto& r : rows) {
            out += "run," + r.dir + "," + r.group + "," + std::to_string(r.seed) + ",1," +
                   format_real(r.communication_loss) + ",0," + format_real(r.diff_vs_first) + "\n";
        }
        for (const auto& g : groups) {
            out += "aggregate,," + g.group + ",," + std::to_string(g.runs) + "," +
                   format_real(g.mean) + "," + format_real(g.stddev) + ",\n";
        }
        return out;
    }
};

/// Reads each report directory's manifest and comm matrix.
inline CompareTable compare_reports(const std::vector<std::filesystem::path>& dirs) {
    if (dirs.size() < 2) throw UsageError("compare: need at least 2 report directories");
    CompareTable t;
    for (const auto& d : dirs) {
        const auto manifest_path = d / "manifest.json";
        std::ifstream mf(manifest_path);
        if (!mf) throw IoError("compare: " + d.string() + " has no manifest.json");
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(mf);
        } catch (const std::exception& e) {
            throw ParseError("compare: " + d.string() + ": bad manifest: " + e.what());
        }
        if (m.value("status", "") != "complete") {
            throw UsageError("compare: " + d.string() + " is not a complete report");
        }
        if (!std::filesystem::exists(d / "comm_matrix.csv")) {
            throw IoError("compare: " + d.string() + " has no comm_matrix.csv");
        }
        const CommMatrix cm = read_comm_matrix(d / "comm_matrix.csv");
        if (!t.rows.empty()) {
            const CommMatrix first = read_comm_matrix(std::filesystem::path(t.rows.front().dir) /
                                                      "comm_matrix.csv");
            if (first.m != cm.m) {
                throw UsageError("compare: " + d.string() + " has " + std::to_string(cm.m) +
                                 " agents, " + t.rows.front().dir + " has " +
                                 std::to_string(first.m));
            }
        }
        CompareRow row;
        row.dir = d.string();
        row.group = m.value("config_group", "");
        row.seed = m.value("seed", std::uint64_t{0});
        row.communication_loss = communication_loss(cm);
        t.rows.push_back(row);
    }
    for (auto& r : t.rows) r.diff_vs_first = r.communication_loss - t.rows.front().communication_loss;

    std::map<std::string, std::vector<double>> by_group;
    for (const auto& r : t.rows) {
        if (!by_group.contains(r.group)) t.groups.push_back({r.group});
        by_group[r.group].push_back(r.communication_loss);
    }
    for (auto& g : t.groups) {
        const auto& v = by_group[g.group];
        g.runs = v.size();
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        g.mean = mean;
        g.stddev = std::sqrt(var / static_cast<double>(v.size()));
    }
    return t;
}

}  // namespace vqcomm
