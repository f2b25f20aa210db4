#include "latentfuse/metrics.hpp"

#include <cmath>

#include "latentfuse/error.hpp"

namespace latentfuse {

namespace {
void check_unit(const std::vector<double>& v, const char* what) {
    double n = 0.0;
    for (double x : v) n += x * x;
    if (std::abs(std::sqrt(n) - 1.0) > 1e-6)
        throw Error(std::string(what) + ": feature is not unit-normalized");
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("metrics: feature dimensions differ");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
}  // namespace

double frame_consistency(const std::vector<std::vector<double>>& feats) {
    if (feats.size() < 2)
        throw Error("frame_consistency: needs at least 2 frames");
    for (const auto& f : feats) check_unit(f, "frame_consistency");

    double sum = 0.0;
    long pairs = 0;
    for (size_t j = 0; j < feats.size(); ++j) {
        for (size_t k = j + 1; k < feats.size(); ++k) {
            sum += dot(feats[j], feats[k]);
            ++pairs;
        }
    }
    return 100.0 * sum / pairs;
}

double textual_alignment(const std::vector<std::vector<double>>& feats,
                         const std::vector<double>& text_feature) {
    if (feats.empty()) throw Error("textual_alignment: no frames");
    check_unit(text_feature, "textual_alignment");
    for (const auto& f : feats) check_unit(f, "textual_alignment");

    double sum = 0.0;
    for (const auto& f : feats) sum += dot(f, text_feature);
    return 100.0 * sum / static_cast<double>(feats.size());
}

}  // namespace latentfuse
