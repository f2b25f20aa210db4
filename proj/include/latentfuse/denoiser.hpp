#pragma once

#include <optional>
#include <vector>

#include "latentfuse/video_latent.hpp"

namespace latentfuse {

// A prompt embedding. Trained models consume the vector; analytic models
// consume the class id. Exactly one canonical null embedding exists per
// model family: an all-zero vector with is_null set.
struct ConditionEmbedding {
    std::vector<double> vec;
    bool is_null = false;
    int class_id = -1;

    static ConditionEmbedding null_of_dim(int e) {
        ConditionEmbedding c;
        c.vec.assign(e, 0.0);
        c.is_null = true;
        return c;
    }
};

// Text condition plus an optional second condition channel (the structural
// "image condition" analog used by dual guidance).
struct Conditioning {
    ConditionEmbedding text;
    std::optional<ConditionEmbedding> image;
};

// Epsilon predictor. Image-role models treat frames independently
// (perturbing frame j changes only row j of the prediction); video-role
// models may couple frames.
class Denoiser {
public:
    enum class Role { image, video };

    virtual ~Denoiser() = default;

    virtual Role role() const = 0;

    // t in [1, T]; returns an array shaped exactly like z.
    virtual VideoLatent predict_eps(const VideoLatent& z, int t, const Conditioning& cond) const = 0;
};

}  // namespace latentfuse
