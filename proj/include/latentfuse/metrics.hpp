#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace latentfuse {

// Mean pairwise cosine similarity over all unordered frame pairs, scaled by
// 100. Requires >= 2 unit-normalized features.
double frame_consistency(const std::vector<std::vector<double>>& frame_features);

// Mean cosine similarity between each frame feature and the text feature,
// scaled by 100.
double textual_alignment(const std::vector<std::vector<double>>& frame_features,
                         const std::vector<double>& text_feature);

struct MetricsReport {
    double frame_consistency = 0.0;
    double textual_alignment = 0.0;
    int n_frames = 0;
    uint64_t seed = 0;
    std::string config_fingerprint;
};

}  // namespace latentfuse
