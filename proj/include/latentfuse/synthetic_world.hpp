#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "latentfuse/linalg.hpp"
#include "latentfuse/rng.hpp"
#include "latentfuse/video_latent.hpp"

namespace latentfuse {

struct ClassSpec {
    std::string label;
    std::vector<double> mean;   // mu_c, length dim
    double sigma = 1.0;         // per-class noise scale, > 0
    std::vector<double> drift;  // per-frame velocity, length dim
};

// Ground-truth generative model for toy videos: per class, frame k is
// mu_c + k*drift_c plus AR(1)-correlated Gaussian noise with coefficient rho,
// so the stacked video is jointly Gaussian with block covariance
// sigma_c^2 * rho^|j-k| * I_d.
class SyntheticVideoPrior {
public:
    SyntheticVideoPrior(int dim, int frames, double rho, std::vector<ClassSpec> classes);

    int dim() const { return dim_; }
    int frames() const { return frames_; }
    double rho() const { return rho_; }
    int n_classes() const { return static_cast<int>(classes_.size()); }
    const std::vector<ClassSpec>& classes() const { return classes_; }
    const ClassSpec& class_spec(int idx) const { return classes_.at(idx); }

    // Throws UnknownClassError.
    int class_index(const std::string& label) const;

    // Mean of frame k for class idx: mu + k * drift.
    std::vector<double> frame_mean(int class_idx, int frame) const;

    // Full f x d mean stack for one class.
    VideoLatent mean_video(int class_idx) const;

    VideoLatent sample(const std::string& label, Rng& rng) const;

private:
    int dim_;
    int frames_;
    double rho_;
    std::vector<ClassSpec> classes_;
};

// Invertible per-frame affine map standing in for the VAE:
// encode(x) = A x + b, decode(z) = A^-1 (z - b).
class LatentCodec {
public:
    static LatentCodec identity(int dim);
    // A = Q * diag(s) with orthonormal Q and s in [0.5, 2]; offset in [-1, 1).
    static LatentCodec random(int dim, uint64_t seed);

    int dim() const { return fwd_.rows; }

    VideoLatent encode(const VideoLatent& video) const;
    VideoLatent decode(const VideoLatent& latent) const;

    std::vector<double> encode_frame(const std::vector<double>& x) const;

    const Mat& forward_matrix() const { return fwd_; }
    const std::vector<double>& offset() const { return offset_; }

    // A A^T; the spatial covariance shape that a unit isotropic prior takes
    // after encoding.
    Mat pushforward_shape() const;

private:
    LatentCodec(Mat fwd, Mat inv, std::vector<double> offset)
        : fwd_(std::move(fwd)), inv_(std::move(inv)), offset_(std::move(offset)) {}

    Mat fwd_;
    Mat inv_;
    std::vector<double> offset_;
};

// Fixed linear projection + normalization standing in for a frame/text
// feature extractor. The text anchor of a class is the normalized projection
// of its frame-0 mean.
class FrozenEmbedder {
public:
    // Projection rows are orthonormalized Gaussian draws.
    static FrozenEmbedder random(int embed_dim, int dim, uint64_t seed);
    static FrozenEmbedder identity(int dim);
    explicit FrozenEmbedder(Mat projection);

    int embed_dim() const { return projection_.rows; }
    int input_dim() const { return projection_.cols; }

    // Unit-norm projection; throws NumericalError on a zero projection.
    std::vector<double> embed_point(const std::vector<double>& x) const;

    std::vector<std::vector<double>> embed_frames(const VideoLatent& video) const;

    // Anchor for a class given its frame-0 mean.
    std::vector<double> embed_text(const std::vector<double>& class_mean) const;

    const Mat& projection() const { return projection_; }

private:
    Mat projection_;
};

}  // namespace latentfuse
