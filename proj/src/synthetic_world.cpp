#include "latentfuse/synthetic_world.hpp"

#include <cmath>
#include <set>

namespace latentfuse {

SyntheticVideoPrior::SyntheticVideoPrior(int dim, int frames, double rho,
                                         std::vector<ClassSpec> classes)
    : dim_(dim), frames_(frames), rho_(rho), classes_(std::move(classes)) {
    if (dim < 1 || frames < 1) throw ConfigError("SyntheticVideoPrior: dim and frames must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("SyntheticVideoPrior: rho must be in [0, 1)");
    if (classes_.empty()) throw ConfigError("SyntheticVideoPrior: at least one class required");
    std::set<std::string> labels;
    for (const ClassSpec& c : classes_) {
        if (!(c.sigma > 0.0)) throw ConfigError("SyntheticVideoPrior: sigma must be > 0 for class " + c.label);
        if (static_cast<int>(c.mean.size()) != dim || static_cast<int>(c.drift.size()) != dim)
            throw ConfigError("SyntheticVideoPrior: mean/drift dimension mismatch for class " + c.label);
        if (!labels.insert(c.label).second)
            throw ConfigError("SyntheticVideoPrior: duplicate class label " + c.label);
    }
}

int SyntheticVideoPrior::class_index(const std::string& label) const {
    for (size_t i = 0; i < classes_.size(); ++i)
        if (classes_[i].label == label) return static_cast<int>(i);
    throw UnknownClassError("unknown class label: " + label);
}

std::vector<double> SyntheticVideoPrior::frame_mean(int class_idx, int frame) const {
    const ClassSpec& c = classes_.at(class_idx);
    std::vector<double> m(dim_);
    for (int i = 0; i < dim_; ++i) m[i] = c.mean[i] + frame * c.drift[i];
    return m;
}

VideoLatent SyntheticVideoPrior::mean_video(int class_idx) const {
    VideoLatent m(frames_, dim_);
    for (int k = 0; k < frames_; ++k) m.set_frame(k, frame_mean(class_idx, k));
    return m;
}

VideoLatent SyntheticVideoPrior::sample(const std::string& label, Rng& rng) const {
    const int ci = class_index(label);
    const ClassSpec& c = classes_[ci];
    VideoLatent video(frames_, dim_);

    // Stationary AR(1): n_0 = sigma*g, n_k = rho*n_{k-1} + sigma*sqrt(1-rho^2)*g,
    // giving marginal variance sigma^2 and lag-l correlation rho^l.
    const double innov = c.sigma * std::sqrt(1.0 - rho_ * rho_);
    std::vector<double> noise(dim_, 0.0);
    for (int k = 0; k < frames_; ++k) {
        for (int i = 0; i < dim_; ++i) {
            const double g = rng.normal();
            noise[i] = (k == 0) ? c.sigma * g : rho_ * noise[i] + innov * g;
            video(k, i) = c.mean[i] + k * c.drift[i] + noise[i];
        }
    }
    return video;
}

LatentCodec LatentCodec::identity(int dim) {
    return LatentCodec(Mat::identity(dim), Mat::identity(dim), std::vector<double>(dim, 0.0));
}

LatentCodec LatentCodec::random(int dim, uint64_t seed) {
    Rng rng(splitmix64(seed ^ 0x1ece37a11ce0decULL));

    // Gram-Schmidt on Gaussian columns -> orthonormal Q.
    Mat q(dim, dim);
    for (int j = 0; j < dim; ++j) {
        std::vector<double> col(dim);
        for (int i = 0; i < dim; ++i) col[i] = rng.normal();
        for (int p = 0; p < j; ++p) {
            double dot = 0.0;
            for (int i = 0; i < dim; ++i) dot += col[i] * q(i, p);
            for (int i = 0; i < dim; ++i) col[i] -= dot * q(i, p);
        }
        double nrm = 0.0;
        for (double x : col) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm < 1e-8) throw NumericalError("LatentCodec::random: degenerate basis draw");
        for (int i = 0; i < dim; ++i) q(i, j) = col[i] / nrm;
    }

    std::vector<double> scale(dim);
    for (int i = 0; i < dim; ++i) scale[i] = rng.uniform(0.5, 2.0);
    std::vector<double> offset(dim);
    for (int i = 0; i < dim; ++i) offset[i] = rng.uniform(-1.0, 1.0);

    Mat fwd(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) fwd(i, j) = q(i, j) * scale[j];

    // inverse = diag(1/s) * Q^T, exact up to round-off
    Mat inv(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) inv(i, j) = q(j, i) / scale[i];

    return LatentCodec(std::move(fwd), std::move(inv), std::move(offset));
}

std::vector<double> LatentCodec::encode_frame(const std::vector<double>& x) const {
    std::vector<double> z = mat_vec(fwd_, x);
    for (int i = 0; i < fwd_.rows; ++i) z[i] += offset_[i];
    return z;
}

VideoLatent LatentCodec::encode(const VideoLatent& video) const {
    if (video.dim != dim()) throw ShapeError("LatentCodec::encode: dimension mismatch");
    VideoLatent out(video.frames, video.dim);
    for (int k = 0; k < video.frames; ++k) out.set_frame(k, encode_frame(video.frame(k)));
    return out;
}

VideoLatent LatentCodec::decode(const VideoLatent& latent) const {
    if (latent.dim != dim()) throw ShapeError("LatentCodec::decode: dimension mismatch");
    VideoLatent out(latent.frames, latent.dim);
    for (int k = 0; k < latent.frames; ++k) {
        std::vector<double> z = latent.frame(k);
        for (int i = 0; i < dim(); ++i) z[i] -= offset_[i];
        out.set_frame(k, mat_vec(inv_, z));
    }
    return out;
}

Mat LatentCodec::pushforward_shape() const { return mat_mul(fwd_, mat_transpose(fwd_)); }

FrozenEmbedder::FrozenEmbedder(Mat projection) : projection_(std::move(projection)) {
    if (projection_.rows < 1 || projection_.cols < 1)
        throw ConfigError("FrozenEmbedder: empty projection");
}

FrozenEmbedder FrozenEmbedder::identity(int dim) { return FrozenEmbedder(Mat::identity(dim)); }

FrozenEmbedder FrozenEmbedder::random(int embed_dim, int dim, uint64_t seed) {
    if (embed_dim > dim)
        throw ConfigError("FrozenEmbedder::random: embed_dim must be <= input dim");
    Rng rng(splitmix64(seed ^ 0xe3bedde2f594ULL));
    Mat p(embed_dim, dim);
    for (int r = 0; r < embed_dim; ++r) {
        std::vector<double> row(dim);
        for (int i = 0; i < dim; ++i) row[i] = rng.normal();
        for (int pr = 0; pr < r; ++pr) {
            double dot = 0.0;
            for (int i = 0; i < dim; ++i) dot += row[i] * p(pr, i);
            for (int i = 0; i < dim; ++i) row[i] -= dot * p(pr, i);
        }
        double nrm = 0.0;
        for (double x : row) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm < 1e-8) throw NumericalError("FrozenEmbedder::random: degenerate row draw");
        for (int i = 0; i < dim; ++i) p(r, i) = row[i] / nrm;
    }
    return FrozenEmbedder(std::move(p));
}

std::vector<double> FrozenEmbedder::embed_point(const std::vector<double>& x) const {
    std::vector<double> p = mat_vec(projection_, x);
    double nrm = 0.0;
    for (double v : p) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12)
        throw NumericalError("FrozenEmbedder: projection is the zero vector, cannot normalize");
    for (double& v : p) v /= nrm;
    return p;
}

std::vector<std::vector<double>> FrozenEmbedder::embed_frames(const VideoLatent& video) const {
    std::vector<std::vector<double>> feats;
    feats.reserve(video.frames);
    for (int k = 0; k < video.frames; ++k) feats.push_back(embed_point(video.frame(k)));
    return feats;
}

std::vector<double> FrozenEmbedder::embed_text(const std::vector<double>& class_mean) const {
    return embed_point(class_mean);
}

}  // namespace latentfuse
