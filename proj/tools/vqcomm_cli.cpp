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

// vqcomm: run, sweep and compare communication experiments.
//
//   vqcomm run     --config FILE [--seed S] [--out DIR] [--set section.key=value]...
//   vqcomm sweep   --config FILE --param section.key --values v1,v2,... [same flags]
//   vqcomm compare DIR DIR... [--csv FILE]
//
// Precedence: defaults < config file < --set < --seed/--out.
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vqcomm/vqcomm.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "INI config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Override experiment.seed");
    cmd->add_option("--out", f.out, "Override experiment.output_dir");
    cmd->add_option("--set", f.overrides, "Override a field: section.key=value (repeatable)");
}

vqcomm::ExperimentConfig resolve(const CommonFlags& f, vqcomm::ConfigBuilder& b) {
    b.load_file(f.config);
    for (const auto& o : f.overrides) b.apply_override(o);
    if (f.seed) b.set("experiment.seed", std::to_string(*f.seed));
    if (f.out) b.set("experiment.output_dir", *f.out);
    return b.finish();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent discrete communication experiments"};
    app.set_version_flag("--version", vqcomm::kVersionString);
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "Run one experiment");
    add_common(run_cmd, run_flags);

    CommonFlags sweep_flags;
    std::string param;
    std::vector<std::string> values;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run one experiment per value of a field");
    add_common(sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--param", param, "Field to sweep, e.g. model.tokens")->required();
    sweep_cmd->add_option("--values", values, "Comma-separated values")
        ->required()
        ->delimiter(',');

    std::vector<std::string> dirs;
    std::string csv_path;
    auto* compare_cmd = app.add_subcommand("compare", "Summarize communication loss across reports");
    compare_cmd->add_option("dirs", dirs, "Report directories")->required();
    compare_cmd->add_option("--csv", csv_path, "Also write the table to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? vqcomm::kExitOk : vqcomm::kExitValidation;
    }

    try {
        if (*run_cmd) {
            vqcomm::ConfigBuilder b;
            const auto cfg = resolve(run_flags, b);
            const auto r = vqcomm::run(cfg);
            if (r.exit_code == vqcomm::kExitOk) {
                std::cout << "communication_loss " << vqcomm::format_real(r.communication_loss)
                          << "\n"
                          << "report " << cfg.output_dir << "\n";
            }
            return r.exit_code;
        }
        if (*sweep_cmd) {
            vqcomm::ConfigBuilder b;
            const auto cfg = resolve(sweep_flags, b);
            return vqcomm::sweep(cfg, param, values);
        }
        if (*compare_cmd) {
            std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
            const auto table = vqcomm::compare_reports(paths);
            const std::string csv = table.to_csv();
            std::cout << csv;
            if (!csv_path.empty()) {
                std::ofstream f(csv_path, std::ios::trunc);
                f << csv;
                if (!f) throw vqcomm::IoError("cannot write " + csv_path);
            }
            return vqcomm::kExitOk;
        }
    } catch (const vqcomm::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return vqcomm::kExitValidation;
    } catch (const vqcomm::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return vqcomm::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return vqcomm::kExitRuntime;
    }
    return vqcomm::kExitRuntime;
}
