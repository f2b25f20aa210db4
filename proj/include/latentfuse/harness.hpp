#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "latentfuse/analytic_denoiser.hpp"
#include "latentfuse/config.hpp"
#include "latentfuse/ddim.hpp"
#include "latentfuse/fusion.hpp"
#include "latentfuse/metrics.hpp"
#include "latentfuse/null_text.hpp"
#include "latentfuse/synthetic_world.hpp"
#include "latentfuse/trained_denoiser.hpp"

namespace latentfuse {

// Realized world objects shared by every run of one config.
struct World {
    SyntheticVideoPrior prior;
    LatentCodec codec;
    FrozenEmbedder embedder;
    // Per-class prompt embeddings (seeded orthonormal directions) consumed by
    // trained models; the null embedding is the origin of this space.
    std::vector<std::vector<double>> class_embeddings;

    int n_classes() const { return prior.n_classes(); }
    int condition_dim() const { return class_embeddings.empty() ? 0 : (int)class_embeddings[0].size(); }

    // Prompt embedding carrying the class id for analytic models.
    ConditionEmbedding text_condition(const std::string& label) const;
    ConditionEmbedding null_condition() const;

    // Feature anchor of a class (normalized projection of its frame-0 mean).
    std::vector<double> text_anchor(const std::string& label) const;
};

World build_world(const WorldConfig& cfg);

// Class priors pushed through the codec into latent space. When edit_bias is
// nonzero the target-class mean is blended toward the source class,
// standing in for a weakly conditioned video model.
GaussianVideoPrior latent_prior(const World& world, double edit_bias, const std::string& source,
                                const std::string& target);

std::vector<TrainingSample> make_training_dataset(const World& world, int videos_per_class,
                                                  uint64_t seed, bool with_image_channel);

// Runs cells on a bounded pool; results land by index so output order never
// depends on scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

void write_video_csv(const std::string& path, const VideoLatent& video);
void write_trace_csv(const std::string& path, const FusionTrace& trace);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
void save_null_text_result(const std::string& path_prefix, const NullTextResult& result);
NullTextResult load_null_text_result(const std::string& path_prefix);

// World, schedule and both denoising branches built once per config.
// Trained branches are loaded from the configured weights or trained on the
// spot. Immutable afterwards; runs are safe to execute concurrently.
class Pipeline {
public:
    explicit Pipeline(const ExperimentConfig& cfg);

    struct Prepared {
        VideoLatent source_video;  // pixel space
        VideoLatent z0;            // encoded
        VideoLatent zT_video;
        VideoLatent zT_image;
        GuidanceConfig guidance_video;  // overrides filled by null-text inversion
        GuidanceConfig guidance_image;
        NullTextResult null_text_video;  // empty unless the branch is trained
        NullTextResult null_text_image;
    };
    Prepared prepare(uint64_t seed) const;

    struct EditOutcome {
        VideoLatent source_video;
        VideoLatent edited_video;
        MetricsReport metrics;
        FusionTrace trace;
        NullTextResult null_text_video;  // populated for trained branches
        NullTextResult null_text_image;
    };
    EditOutcome run_edit(uint64_t seed, const FusionConfig& fusion) const;

    struct BranchOutcome {
        VideoLatent video;
        MetricsReport metrics;
    };
    BranchOutcome run_branch(uint64_t seed, Denoiser::Role role) const;

    MetricsReport score(const VideoLatent& decoded_video, uint64_t seed) const;

    const ExperimentConfig& config() const { return cfg_; }
    const std::string& fingerprint() const { return fingerprint_; }
    const World& world() const { return world_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const Denoiser& video_denoiser() const { return *video_den_; }
    const Denoiser& image_denoiser() const { return *image_den_; }
    const TrainedDenoiser* trained_video() const { return trained_video_.get(); }
    const TrainedDenoiser* trained_image() const { return trained_image_.get(); }
    Conditioning target_conditioning() const;
    Conditioning source_conditioning() const;

private:
    GuidanceConfig base_guidance(const GuidanceSettings& s) const;

    ExperimentConfig cfg_;
    std::string fingerprint_;
    World world_;
    NoiseSchedule schedule_;
    std::shared_ptr<TrainedDenoiser> trained_video_;
    std::shared_ptr<TrainedDenoiser> trained_image_;
    std::shared_ptr<Denoiser> video_den_;
    std::shared_ptr<Denoiser> image_den_;
};

// CLI commands. Each validates, runs every cell, and writes CSV/JSON
// artifacts into out_dir. Validation problems throw ConfigError before any
// output is written.
void cmd_edit(const ExperimentConfig& cfg, const std::string& out_dir, int jobs);
void cmd_sweep_alpha(const ExperimentConfig& cfg, const std::string& out_dir, int jobs);
void cmd_sweep_tau(const ExperimentConfig& cfg, const std::string& out_dir, int jobs);
void cmd_ablate_schedule(const ExperimentConfig& cfg, const std::string& out_dir, int jobs);
void cmd_baselines(const ExperimentConfig& cfg, const std::string& out_dir, int jobs);
void cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace latentfuse
