#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentfuse/denoiser.hpp"
#include "latentfuse/linalg.hpp"
#include "latentfuse/noise_schedule.hpp"
#include "latentfuse/rng.hpp"

namespace latentfuse {

struct TrainedDenoiserConfig {
    Denoiser::Role role = Denoiser::Role::image;
    int latent_dim = 4;
    int cond_dim = 2;
    int image_cond_dim = 0;  // 0 disables the second channel
    int hidden = 48;
    int time_features = 8;
    uint64_t init_seed = 1;
};

// Per-frame feed-forward epsilon predictor:
//   input  = frame latent ++ sinusoidal time features ++ condition vector(s)
//   h1     = tanh(W1 x + b1)
//   video role mixes frames: g = [h1 ; mean_k h1_k], image role: g = h1
//   h2     = tanh(W2 g + b2)
//   eps    = W3 h2 + b3
// Gradients are hand-written reverse mode over this fixed architecture.
class TrainedDenoiser : public Denoiser {
public:
    explicit TrainedDenoiser(const TrainedDenoiserConfig& cfg);

    Role role() const override { return cfg_.role; }
    const TrainedDenoiserConfig& config() const { return cfg_; }

    VideoLatent predict_eps(const VideoLatent& z, int t, const Conditioning& cond) const override;

    struct Gradients {
        VideoLatent wrt_z;
        std::vector<double> wrt_text_cond;
        std::vector<double> wrt_image_cond;
    };

    // Reverse-mode pull-back of upstream = dL/d eps onto inputs; throws
    // NumericalError naming the offending tensor if anything is non-finite.
    Gradients backward_inputs(const VideoLatent& z, int t, const Conditioning& cond,
                              const VideoLatent& upstream) const;

    // Parameter gradients for the mean-squared epsilon objective
    // L = mean((eps_hat - target)^2); returns L and accumulates grads.
    double loss_and_param_grads(const VideoLatent& z, int t, const Conditioning& cond,
                                const VideoLatent& target, std::vector<double>& grad) const;

    size_t n_params() const { return params_.size(); }
    const std::vector<double>& params() const { return params_; }
    void set_params(std::vector<double> p);

    std::vector<double> time_features(int t) const;

    // flat CSV tensor dump + JSON header (shapes, seed, schedule hash)
    void save(const std::string& path_prefix, uint64_t schedule_hash) const;
    static TrainedDenoiser load(const std::string& path_prefix, uint64_t expected_schedule_hash);

private:
    struct ForwardCache;
    void forward(const VideoLatent& z, int t, const Conditioning& cond, ForwardCache& fc) const;
    void backward(const ForwardCache& fc, const VideoLatent& upstream, Gradients* in_grads,
                  std::vector<double>* param_grads) const;

    int input_dim() const;
    int mix_dim() const;

    // parameter views into params_
    double w1(int r, int c) const;
    double w2(int r, int c) const;
    double w3(int r, int c) const;
    double b1(int i) const;
    double b2(int i) const;
    double b3(int i) const;
    size_t off_w1_, off_b1_, off_w2_, off_b2_, off_w3_, off_b3_;

    TrainedDenoiserConfig cfg_;
    std::vector<double> params_;
};

struct TrainingSample {
    VideoLatent video;  // clean latent
    Conditioning cond;
};

struct TrainingConfig {
    long steps = 40000;
    double learning_rate = 0.02;
    uint64_t seed = 1;
    // Fraction of steps trained on the null condition, so the unconditional
    // branch of classifier-free guidance is in-distribution.
    double cond_dropout = 0.1;
};

struct TrainingRun {
    TrainedDenoiser model;
    std::vector<double> loss_history;  // one entry per step
};

// Plain SGD on the epsilon-prediction objective: random sample, random
// t ~ U(1,T), random standard-normal eps. Deterministic given seed; throws
// TrainingError with the offending step if the loss goes non-finite.
TrainingRun train_denoiser(const std::vector<TrainingSample>& dataset,
                           const NoiseSchedule& schedule, const TrainedDenoiserConfig& model_cfg,
                           const TrainingConfig& train_cfg);

// Held-out epsilon-prediction MSE of an arbitrary denoiser on noisy versions
// of the given samples (shared draws across calls with the same seed).
double heldout_eps_mse(const Denoiser& model, const std::vector<TrainingSample>& samples,
                       const NoiseSchedule& schedule, uint64_t seed, int draws_per_sample = 8);

}  // namespace latentfuse
