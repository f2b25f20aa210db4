#include "latentfuse/trained_denoiser.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace latentfuse {

namespace {
double tanh_prime_from_value(double y) { return 1.0 - y * y; }
}  // namespace

int TrainedDenoiser::input_dim() const {
    return cfg_.latent_dim + cfg_.time_features + cfg_.cond_dim + cfg_.image_cond_dim;
}

int TrainedDenoiser::mix_dim() const {
    return cfg_.role == Role::video ? 2 * cfg_.hidden : cfg_.hidden;
}

TrainedDenoiser::TrainedDenoiser(const TrainedDenoiserConfig& cfg) : cfg_(cfg) {
    if (cfg_.latent_dim < 1 || cfg_.hidden < 1 || cfg_.cond_dim < 1 || cfg_.image_cond_dim < 0)
        throw ConfigError("TrainedDenoiser: invalid dimensions");
    if (cfg_.time_features < 2 || cfg_.time_features % 2 != 0)
        throw ConfigError("TrainedDenoiser: time_features must be a positive even count");

    const int in = input_dim();
    const int h = cfg_.hidden;
    const int m = mix_dim();
    const int d = cfg_.latent_dim;

    off_w1_ = 0;
    off_b1_ = off_w1_ + static_cast<size_t>(h) * in;
    off_w2_ = off_b1_ + h;
    off_b2_ = off_w2_ + static_cast<size_t>(h) * m;
    off_w3_ = off_b2_ + h;
    off_b3_ = off_w3_ + static_cast<size_t>(d) * h;
    params_.assign(off_b3_ + d, 0.0);
    if (params_.size() >= 100000) throw ConfigError("TrainedDenoiser: parameter budget exceeded");

    // Xavier-uniform, biases zero
    Rng rng(splitmix64(cfg_.init_seed ^ 0x7a1bed0eULL));
    auto init = [&rng](std::vector<double>& p, size_t off, int rows, int cols) {
        const double lim = std::sqrt(6.0 / (rows + cols));
        for (size_t i = 0; i < static_cast<size_t>(rows) * cols; ++i)
            p[off + i] = rng.uniform(-lim, lim);
    };
    init(params_, off_w1_, h, in);
    init(params_, off_w2_, h, m);
    init(params_, off_w3_, d, h);
}

double TrainedDenoiser::w1(int r, int c) const { return params_[off_w1_ + static_cast<size_t>(r) * input_dim() + c]; }
double TrainedDenoiser::w2(int r, int c) const { return params_[off_w2_ + static_cast<size_t>(r) * mix_dim() + c]; }
double TrainedDenoiser::w3(int r, int c) const { return params_[off_w3_ + static_cast<size_t>(r) * cfg_.hidden + c]; }
double TrainedDenoiser::b1(int i) const { return params_[off_b1_ + i]; }
double TrainedDenoiser::b2(int i) const { return params_[off_b2_ + i]; }
double TrainedDenoiser::b3(int i) const { return params_[off_b3_ + i]; }

void TrainedDenoiser::set_params(std::vector<double> p) {
    if (p.size() != params_.size()) throw ShapeError("TrainedDenoiser::set_params: size mismatch");
    params_ = std::move(p);
}

std::vector<double> TrainedDenoiser::time_features(int t) const {
    const int n = cfg_.time_features;
    std::vector<double> f(n);
    for (int i = 0; i < n / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / n);
        f[2 * i] = std::sin(t * freq);
        f[2 * i + 1] = std::cos(t * freq);
    }
    return f;
}

struct TrainedDenoiser::ForwardCache {
    int frames = 0;
    std::vector<std::vector<double>> x;    // per-frame input
    std::vector<std::vector<double>> h1;   // per-frame tanh output
    std::vector<double> h1_mean;           // video role only
    std::vector<std::vector<double>> g;    // per-frame mix-layer input
    std::vector<std::vector<double>> h2;   // per-frame tanh output
    VideoLatent eps;
};

void TrainedDenoiser::forward(const VideoLatent& z, int t, const Conditioning& cond,
                              ForwardCache& fc) const {
    if (z.dim != cfg_.latent_dim) throw ShapeError("TrainedDenoiser: latent dim mismatch");
    if (static_cast<int>(cond.text.vec.size()) != cfg_.cond_dim)
        throw ShapeError("TrainedDenoiser: condition dim mismatch");
    if (cfg_.image_cond_dim > 0) {
        if (!cond.image || static_cast<int>(cond.image->vec.size()) != cfg_.image_cond_dim)
            throw ShapeError("TrainedDenoiser: model expects an image condition of dim " +
                             std::to_string(cfg_.image_cond_dim));
    }

    const int f = z.frames;
    const int h = cfg_.hidden;
    const int in = input_dim();
    const int m = mix_dim();
    const int d = cfg_.latent_dim;
    const std::vector<double> tf = time_features(t);

    fc.frames = f;
    fc.x.assign(f, std::vector<double>(in));
    fc.h1.assign(f, std::vector<double>(h));
    fc.g.assign(f, std::vector<double>(m));
    fc.h2.assign(f, std::vector<double>(h));
    fc.eps = VideoLatent(f, d);

    for (int k = 0; k < f; ++k) {
        std::vector<double>& x = fc.x[k];
        int p = 0;
        for (int i = 0; i < d; ++i) x[p++] = z(k, i);
        for (double v : tf) x[p++] = v;
        for (double v : cond.text.vec) x[p++] = v;
        if (cfg_.image_cond_dim > 0)
            for (double v : cond.image->vec) x[p++] = v;

        for (int r = 0; r < h; ++r) {
            double s = b1(r);
            for (int c = 0; c < in; ++c) s += w1(r, c) * x[c];
            fc.h1[k][r] = std::tanh(s);
        }
    }

    if (cfg_.role == Role::video) {
        fc.h1_mean.assign(h, 0.0);
        for (int k = 0; k < f; ++k)
            for (int r = 0; r < h; ++r) fc.h1_mean[r] += fc.h1[k][r] / f;
    }

    for (int k = 0; k < f; ++k) {
        if (cfg_.role == Role::video) {
            for (int r = 0; r < h; ++r) {
                fc.g[k][r] = fc.h1[k][r];
                fc.g[k][h + r] = fc.h1_mean[r];
            }
        } else {
            fc.g[k] = fc.h1[k];
        }
        for (int r = 0; r < h; ++r) {
            double s = b2(r);
            for (int c = 0; c < m; ++c) s += w2(r, c) * fc.g[k][c];
            fc.h2[k][r] = std::tanh(s);
        }
        for (int r = 0; r < d; ++r) {
            double s = b3(r);
            for (int c = 0; c < h; ++c) s += w3(r, c) * fc.h2[k][c];
            fc.eps(k, r) = s;
        }
    }
}

VideoLatent TrainedDenoiser::predict_eps(const VideoLatent& z, int t,
                                         const Conditioning& cond) const {
    ForwardCache fc;
    forward(z, t, cond, fc);
    return fc.eps;
}

void TrainedDenoiser::backward(const ForwardCache& fc, const VideoLatent& upstream,
                               Gradients* in_grads, std::vector<double>* param_grads) const {
    const int f = fc.frames;
    const int h = cfg_.hidden;
    const int in = input_dim();
    const int m = mix_dim();
    const int d = cfg_.latent_dim;

    if (in_grads) {
        in_grads->wrt_z = VideoLatent(f, d);
        in_grads->wrt_text_cond.assign(cfg_.cond_dim, 0.0);
        in_grads->wrt_image_cond.assign(cfg_.image_cond_dim, 0.0);
    }

    std::vector<std::vector<double>> da2(f, std::vector<double>(h));
    std::vector<double> dh1_mean(h, 0.0);

    for (int k = 0; k < f; ++k) {
        for (int r = 0; r < h; ++r) {
            double s = 0.0;
            for (int o = 0; o < d; ++o) s += w3(o, r) * upstream(k, o);
            da2[k][r] = s * tanh_prime_from_value(fc.h2[k][r]);
        }
        if (param_grads) {
            for (int o = 0; o < d; ++o) {
                (*param_grads)[off_b3_ + o] += upstream(k, o);
                for (int r = 0; r < h; ++r)
                    (*param_grads)[off_w3_ + static_cast<size_t>(o) * h + r] +=
                        upstream(k, o) * fc.h2[k][r];
            }
        }
        if (cfg_.role == Role::video) {
            for (int c = 0; c < h; ++c) {
                double s = 0.0;
                for (int r = 0; r < h; ++r) s += w2(r, h + c) * da2[k][r];
                dh1_mean[c] += s;
            }
        }
    }

    for (int k = 0; k < f; ++k) {
        std::vector<double> dh1(h, 0.0);
        for (int c = 0; c < h; ++c) {
            double s = 0.0;
            for (int r = 0; r < h; ++r) s += w2(r, c) * da2[k][r];
            dh1[c] = s;
        }
        if (cfg_.role == Role::video)
            for (int c = 0; c < h; ++c) dh1[c] += dh1_mean[c] / f;

        std::vector<double> da1(h);
        for (int r = 0; r < h; ++r) da1[r] = dh1[r] * tanh_prime_from_value(fc.h1[k][r]);

        if (param_grads) {
            for (int r = 0; r < h; ++r) {
                (*param_grads)[off_b2_ + r] += da2[k][r];
                for (int c = 0; c < m; ++c)
                    (*param_grads)[off_w2_ + static_cast<size_t>(r) * m + c] +=
                        da2[k][r] * fc.g[k][c];
                (*param_grads)[off_b1_ + r] += da1[r];
                for (int c = 0; c < in; ++c)
                    (*param_grads)[off_w1_ + static_cast<size_t>(r) * in + c] +=
                        da1[r] * fc.x[k][c];
            }
        }

        if (in_grads) {
            for (int c = 0; c < in; ++c) {
                double s = 0.0;
                for (int r = 0; r < h; ++r) s += w1(r, c) * da1[r];
                if (c < d) {
                    in_grads->wrt_z(k, c) = s;
                } else if (c < d + cfg_.time_features) {
                    // time features are constants
                } else if (c < d + cfg_.time_features + cfg_.cond_dim) {
                    in_grads->wrt_text_cond[c - d - cfg_.time_features] += s;
                } else {
                    in_grads->wrt_image_cond[c - d - cfg_.time_features - cfg_.cond_dim] += s;
                }
            }
        }
    }
}

TrainedDenoiser::Gradients TrainedDenoiser::backward_inputs(const VideoLatent& z, int t,
                                                            const Conditioning& cond,
                                                            const VideoLatent& upstream) const {
    ForwardCache fc;
    forward(z, t, cond, fc);
    check_same_shape(fc.eps, upstream, "TrainedDenoiser::backward_inputs");
    Gradients g;
    backward(fc, upstream, &g, nullptr);
    for (double v : g.wrt_text_cond)
        if (!std::isfinite(v))
            throw NumericalError("TrainedDenoiser: non-finite gradient wrt text condition");
    if (!all_finite(g.wrt_z))
        throw NumericalError("TrainedDenoiser: non-finite gradient wrt latent input");
    return g;
}

double TrainedDenoiser::loss_and_param_grads(const VideoLatent& z, int t, const Conditioning& cond,
                                             const VideoLatent& target,
                                             std::vector<double>& grad) const {
    ForwardCache fc;
    forward(z, t, cond, fc);
    check_same_shape(fc.eps, target, "TrainedDenoiser::loss_and_param_grads");
    if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);

    const double n = static_cast<double>(fc.eps.v.size());
    double loss = 0.0;
    VideoLatent upstream(fc.eps.frames, fc.eps.dim);
    for (size_t i = 0; i < fc.eps.v.size(); ++i) {
        const double r = fc.eps.v[i] - target.v[i];
        loss += r * r / n;
        upstream.v[i] = 2.0 * r / n;
    }
    backward(fc, upstream, nullptr, &grad);
    return loss;
}

TrainingRun train_denoiser(const std::vector<TrainingSample>& dataset,
                           const NoiseSchedule& schedule, const TrainedDenoiserConfig& model_cfg,
                           const TrainingConfig& train_cfg) {
    if (dataset.empty()) throw ConfigError("train_denoiser: empty dataset");

    TrainingRun run{TrainedDenoiser(model_cfg), {}};
    run.loss_history.reserve(train_cfg.steps);

    Rng rng(splitmix64(train_cfg.seed ^ 0x5d70c4a11ULL));
    std::vector<double> params = run.model.params();
    std::vector<double> grad(params.size(), 0.0);

    for (long step = 0; step < train_cfg.steps; ++step) {
        const TrainingSample& s = dataset[static_cast<size_t>(rng.next_u64() % dataset.size())];
        const int t = 1 + static_cast<int>(rng.next_u64() % schedule.steps());
        const double abar = schedule.alpha_bar(t);

        VideoLatent eps(s.video.frames, s.video.dim);
        for (double& v : eps.v) v = rng.normal();
        VideoLatent zt(s.video.frames, s.video.dim);
        for (size_t i = 0; i < zt.v.size(); ++i)
            zt.v[i] = std::sqrt(abar) * s.video.v[i] + std::sqrt(1.0 - abar) * eps.v[i];

        Conditioning cond = s.cond;
        if (rng.uniform() < train_cfg.cond_dropout)
            cond.text = ConditionEmbedding::null_of_dim(model_cfg.cond_dim);
        if (cond.image && rng.uniform() < train_cfg.cond_dropout)
            cond.image = ConditionEmbedding::null_of_dim(model_cfg.image_cond_dim);

        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = run.model.loss_and_param_grads(zt, t, cond, eps, grad);
        if (!std::isfinite(loss))
            throw TrainingError("train_denoiser: loss diverged at step " + std::to_string(step),
                                step);
        run.loss_history.push_back(loss);

        for (size_t i = 0; i < params.size(); ++i)
            params[i] -= train_cfg.learning_rate * grad[i];
        run.model.set_params(params);
    }
    return run;
}

double heldout_eps_mse(const Denoiser& model, const std::vector<TrainingSample>& samples,
                       const NoiseSchedule& schedule, uint64_t seed, int draws_per_sample) {
    if (samples.empty()) throw ConfigError("heldout_eps_mse: no samples");
    Rng rng(splitmix64(seed ^ 0x4e1d0c7ULL));
    double total = 0.0;
    long count = 0;
    for (const TrainingSample& s : samples) {
        for (int d = 0; d < draws_per_sample; ++d) {
            const int t = 1 + static_cast<int>(rng.next_u64() % schedule.steps());
            const double abar = schedule.alpha_bar(t);
            VideoLatent eps(s.video.frames, s.video.dim);
            for (double& v : eps.v) v = rng.normal();
            VideoLatent zt(s.video.frames, s.video.dim);
            for (size_t i = 0; i < zt.v.size(); ++i)
                zt.v[i] = std::sqrt(abar) * s.video.v[i] + std::sqrt(1.0 - abar) * eps.v[i];
            const VideoLatent pred = model.predict_eps(zt, t, s.cond);
            for (size_t i = 0; i < eps.v.size(); ++i) {
                const double r = pred.v[i] - eps.v[i];
                total += r * r;
                ++count;
            }
        }
    }
    return total / count;
}

void TrainedDenoiser::save(const std::string& path_prefix, uint64_t schedule_hash) const {
    nlohmann::json header;
    header["format"] = "latentfuse-weights-v1";
    header["role"] = cfg_.role == Role::video ? "video" : "image";
    header["latent_dim"] = cfg_.latent_dim;
    header["cond_dim"] = cfg_.cond_dim;
    header["image_cond_dim"] = cfg_.image_cond_dim;
    header["hidden"] = cfg_.hidden;
    header["time_features"] = cfg_.time_features;
    header["init_seed"] = cfg_.init_seed;
    header["n_params"] = params_.size();
    header["schedule_hash"] = schedule_hash;

    std::ofstream hf(path_prefix + ".json");
    if (!hf) throw Error("TrainedDenoiser::save: cannot open " + path_prefix + ".json");
    hf << header.dump(2) << "\n";

    std::ofstream df(path_prefix + ".csv");
    if (!df) throw Error("TrainedDenoiser::save: cannot open " + path_prefix + ".csv");
    char buf[64];
    for (double p : params_) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", p);
        df << buf;
    }
}

TrainedDenoiser TrainedDenoiser::load(const std::string& path_prefix,
                                      uint64_t expected_schedule_hash) {
    std::ifstream hf(path_prefix + ".json");
    if (!hf) throw Error("TrainedDenoiser::load: cannot open " + path_prefix + ".json");
    nlohmann::json header = nlohmann::json::parse(hf);
    if (header.value("format", "") != "latentfuse-weights-v1")
        throw ConfigError("TrainedDenoiser::load: unrecognized weight format");
    if (header.at("schedule_hash").get<uint64_t>() != expected_schedule_hash)
        throw ConfigError("TrainedDenoiser::load: weights were trained for a different schedule");

    TrainedDenoiserConfig cfg;
    cfg.role = header.at("role").get<std::string>() == "video" ? Role::video : Role::image;
    cfg.latent_dim = header.at("latent_dim").get<int>();
    cfg.cond_dim = header.at("cond_dim").get<int>();
    cfg.image_cond_dim = header.at("image_cond_dim").get<int>();
    cfg.hidden = header.at("hidden").get<int>();
    cfg.time_features = header.at("time_features").get<int>();
    cfg.init_seed = header.at("init_seed").get<uint64_t>();

    TrainedDenoiser model(cfg);
    std::vector<double> params;
    params.reserve(header.at("n_params").get<size_t>());
    std::ifstream df(path_prefix + ".csv");
    if (!df) throw Error("TrainedDenoiser::load: cannot open " + path_prefix + ".csv");
    std::string line;
    while (std::getline(df, line)) {
        if (line.empty()) continue;
        params.push_back(std::stod(line));
    }
    if (params.size() != header.at("n_params").get<size_t>())
        throw ConfigError("TrainedDenoiser::load: weight count does not match header");
    model.set_params(std::move(params));
    return model;
}

}  // namespace latentfuse
