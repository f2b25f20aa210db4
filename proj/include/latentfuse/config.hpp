#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "latentfuse/fusion.hpp"
#include "latentfuse/null_text.hpp"
#include "latentfuse/synthetic_world.hpp"

namespace latentfuse {

struct CodecConfig {
    std::string kind = "identity";  // identity | random
    uint64_t seed = 11;
};

struct EmbedderConfig {
    std::string kind = "identity";  // identity | random
    int embed_dim = 4;
    uint64_t seed = 7;
};

struct WorldConfig {
    int dim = 4;
    int frames = 8;
    double rho = 0.9;
    std::vector<ClassSpec> classes;
    CodecConfig codec;
    EmbedderConfig embedder;
    // Prompt-embedding space for trained models; class vectors are seeded
    // orthonormal directions, the null embedding is the origin.
    int condition_dim = 16;
    uint64_t condition_seed = 19;
};

struct DenoiserSelection {
    std::string kind = "analytic";  // analytic | trained
    // Analytic video branch only: blends the target-class mean toward the
    // source class, modeling a weakly conditioned video model.
    double edit_bias = 0.0;
    std::string weights;  // trained: path prefix to load instead of training
};

struct GuidanceSettings {
    double text_scale = 1.0;
    std::optional<double> image_scale;
};

struct ScheduleConfig {
    int steps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct EditConfig {
    std::string source;
    std::string target;
    // When true both branches reuse the video-branch inversion; default runs
    // one inversion per branch.
    bool shared_inversion = false;
};

struct FusionSettings {
    int tau = 25;
    double alpha_tau = 0.6;
    std::string mode = "linear";  // linear | fixed
};

struct SweepConfig {
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<int> taus{0, 10, 25, 40, 50};
};

struct TrainingSettings {
    long steps = 40000;
    double learning_rate = 0.02;
    int hidden = 48;
    int videos_per_class = 64;
    uint64_t seed = 5;
};

struct BootstrapConfig {
    int resamples = 2000;
    uint64_t seed = 99;
};

struct ExperimentConfig {
    WorldConfig world;
    ScheduleConfig schedule;
    DenoiserSelection video_denoiser;
    DenoiserSelection image_denoiser;
    GuidanceSettings guidance_video;
    GuidanceSettings guidance_image;
    EditConfig edit;
    FusionSettings fusion;
    SweepConfig sweep;
    NullTextOptions null_text;
    TrainingSettings training;
    BootstrapConfig bootstrap;
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};

    void validate() const;  // throws ConfigError
    FusionConfig fusion_config() const;
    AlphaMode alpha_mode() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

// Stable 16-hex-digit hash of the canonical serialized config; stamped on
// every output row.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace latentfuse
