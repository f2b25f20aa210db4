#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "latentfuse/harness.hpp"

namespace {

std::vector<uint64_t> parse_seed_list(const std::string& s) {
    std::vector<uint64_t> seeds;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = s.substr(pos, comma - pos);
        if (!tok.empty()) {
            try {
                size_t used = 0;
                seeds.push_back(std::stoull(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw latentfuse::ConfigError("--seeds: '" + tok + "' is not a valid seed");
            }
        }
        pos = comma + 1;
    }
    if (seeds.empty()) throw latentfuse::ConfigError("--seeds: empty seed list");
    return seeds;
}

void write_error_record(const std::string& out_dir, const std::string& type,
                        const std::string& message) {
    if (out_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream f(out_dir + "/error.json");
    if (!f) return;
    nlohmann::json j;
    j["error"] = {{"type", type}, {"message", message}};
    f << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latentfuse: toy latent-fusion video-editing engine and experiment harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string seeds_override;
    int jobs = 1;

    auto add_common = [&](CLI::App* cmd, bool with_jobs = true) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seeds", seeds_override, "comma-separated seed list override");
        if (with_jobs) cmd->add_option("--jobs", jobs, "worker threads for independent cells");
    };

    CLI::App* edit = app.add_subcommand("edit", "run the full editing pipeline per seed");
    CLI::App* sweep_alpha = app.add_subcommand("sweep-alpha", "metrics across the fusion-ratio grid");
    CLI::App* sweep_tau = app.add_subcommand("sweep-tau", "metrics across the fusion-start grid");
    CLI::App* ablate = app.add_subcommand("ablate-schedule", "fixed vs linear-to-one ratio schedule");
    CLI::App* baselines = app.add_subcommand("baselines", "video-only / image-only / fused rows");
    CLI::App* train = app.add_subcommand("train", "train configured denoisers and save weights");
    for (CLI::App* c : {edit, sweep_alpha, sweep_tau, ablate, baselines}) add_common(c);
    add_common(train, /*with_jobs=*/false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        latentfuse::ExperimentConfig cfg = latentfuse::load_config(config_path);
        if (!seeds_override.empty()) {
            cfg.seeds = parse_seed_list(seeds_override);
            cfg.validate();
        }

        if (edit->parsed()) latentfuse::cmd_edit(cfg, out_dir, jobs);
        else if (sweep_alpha->parsed()) latentfuse::cmd_sweep_alpha(cfg, out_dir, jobs);
        else if (sweep_tau->parsed()) latentfuse::cmd_sweep_tau(cfg, out_dir, jobs);
        else if (ablate->parsed()) latentfuse::cmd_ablate_schedule(cfg, out_dir, jobs);
        else if (baselines->parsed()) latentfuse::cmd_baselines(cfg, out_dir, jobs);
        else if (train->parsed()) latentfuse::cmd_train(cfg, out_dir);
        return 0;
    } catch (const latentfuse::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        write_error_record(out_dir, "runtime", e.what());
        return 2;
    }
}
