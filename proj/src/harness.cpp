#include "latentfuse/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "latentfuse/csv.hpp"
#include "latentfuse/stats.hpp"

namespace latentfuse {

namespace {
// per-purpose stream tags so reordering code never shifts random draws
constexpr uint64_t kStreamSourceVideo = 0x10;
constexpr uint64_t kStreamDataset = 0x20;
}  // namespace

ConditionEmbedding World::text_condition(const std::string& label) const {
    const int idx = prior.class_index(label);
    ConditionEmbedding c;
    c.vec = class_embeddings.at(idx);
    c.is_null = false;
    c.class_id = idx;
    return c;
}

ConditionEmbedding World::null_condition() const {
    return ConditionEmbedding::null_of_dim(condition_dim());
}

std::vector<double> World::text_anchor(const std::string& label) const {
    const int idx = prior.class_index(label);
    return embedder.embed_text(prior.frame_mean(idx, 0));
}

World build_world(const WorldConfig& cfg) {
    SyntheticVideoPrior prior(cfg.dim, cfg.frames, cfg.rho, cfg.classes);
    LatentCodec codec = cfg.codec.kind == "random" ? LatentCodec::random(cfg.dim, cfg.codec.seed)
                                                   : LatentCodec::identity(cfg.dim);
    FrozenEmbedder embedder =
        cfg.embedder.kind == "random"
            ? FrozenEmbedder::random(cfg.embedder.embed_dim, cfg.dim, cfg.embedder.seed)
            : FrozenEmbedder::identity(cfg.dim);

    const int nc = prior.n_classes();
    const int e = std::max(cfg.condition_dim, nc);
    Rng rng(splitmix64(cfg.condition_seed ^ 0xc0de11abe1ULL));
    std::vector<std::vector<double>> embeddings(nc, std::vector<double>(e));
    for (int c = 0; c < nc; ++c) {
        for (double& v : embeddings[c]) v = rng.normal();
        for (int p = 0; p < c; ++p) {
            double dot = 0.0;
            for (int i = 0; i < e; ++i) dot += embeddings[c][i] * embeddings[p][i];
            for (int i = 0; i < e; ++i) embeddings[c][i] -= dot * embeddings[p][i];
        }
        double nrm = 0.0;
        for (double v : embeddings[c]) nrm += v * v;
        nrm = std::sqrt(nrm);
        if (nrm < 1e-8) throw NumericalError("build_world: degenerate class embedding draw");
        for (double& v : embeddings[c]) v /= nrm;
    }
    return World{std::move(prior), std::move(codec), std::move(embedder), std::move(embeddings)};
}

GaussianVideoPrior latent_prior(const World& world, double edit_bias, const std::string& source,
                                const std::string& target) {
    const SyntheticVideoPrior& p = world.prior;
    GaussianVideoPrior g;
    g.spatial_shape = world.codec.pushforward_shape();
    g.temporal_corr = ar1_correlation(p.frames(), p.rho());
    for (int c = 0; c < p.n_classes(); ++c) {
        g.labels.push_back(p.class_spec(c).label);
        g.means.push_back(world.codec.encode(p.mean_video(c)));
        g.sigmas.push_back(p.class_spec(c).sigma);
    }
    if (edit_bias != 0.0) {
        if (!(edit_bias >= 0.0 && edit_bias <= 1.0))
            throw ConfigError("latent_prior: edit_bias must be in [0, 1]");
        if (source.empty() || target.empty())
            throw ConfigError("latent_prior: edit_bias needs source and target classes");
        const int si = p.class_index(source);
        const int ti = p.class_index(target);
        for (size_t i = 0; i < g.means[ti].v.size(); ++i)
            g.means[ti].v[i] =
                (1.0 - edit_bias) * g.means[ti].v[i] + edit_bias * g.means[si].v[i];
    }
    return g;
}

std::vector<TrainingSample> make_training_dataset(const World& world, int videos_per_class,
                                                  uint64_t seed, bool with_image_channel) {
    if (videos_per_class < 1) throw ConfigError("make_training_dataset: need >= 1 video per class");
    std::vector<TrainingSample> out;
    Rng base(seed);
    for (int c = 0; c < world.prior.n_classes(); ++c) {
        const std::string& label = world.prior.class_spec(c).label;
        Rng class_rng = base.child(kStreamDataset + c);
        for (int i = 0; i < videos_per_class; ++i) {
            TrainingSample s;
            s.video = world.codec.encode(world.prior.sample(label, class_rng));
            s.cond.text = world.text_condition(label);
            if (with_image_channel) s.cond.image = world.text_condition(label);
            out.push_back(std::move(s));
        }
    }
    return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(jobs, n); ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void write_video_csv(const std::string& path, const VideoLatent& video) {
    std::vector<std::string> header;
    for (int i = 0; i < video.dim; ++i) header.push_back("dim_" + std::to_string(i));
    CsvWriter csv(path, header);
    for (int k = 0; k < video.frames; ++k) {
        std::vector<std::string> row;
        for (int i = 0; i < video.dim; ++i) row.push_back(fmt_double(video(k, i)));
        csv.row(row);
    }
}

void write_trace_csv(const std::string& path, const FusionTrace& trace) {
    CsvWriter csv(path, {"t", "fused", "alpha_used", "divergence"});
    for (const FusionStepRecord& s : trace.steps)
        csv.row({std::to_string(s.t), s.fused ? "1" : "0",
                 s.fused ? fmt_double(s.alpha_used) : std::string(),
                 fmt_double(s.divergence)});
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    CsvWriter csv(path, {"timestep", "frame", "dim", "value"});
    for (size_t i = 0; i < traj.latents.size(); ++i)
        for (int k = 0; k < traj.latents[i].frames; ++k)
            for (int d = 0; d < traj.latents[i].dim; ++d)
                csv.row({std::to_string(traj.timesteps[i]), std::to_string(k), std::to_string(d),
                         fmt_double(traj.latents[i](k, d))});
}

void save_null_text_result(const std::string& prefix, const NullTextResult& result) {
    nlohmann::json header;
    header["format"] = "latentfuse-nulltext-v1";
    header["timesteps"] = result.null_embeddings.size() - 1;
    header["embed_dim"] =
        result.null_embeddings.size() > 1 ? result.null_embeddings[1].size() : 0;
    header["loss_before"] = result.loss_before;
    header["loss_after"] = result.loss_after;
    std::ofstream hf(prefix + ".json");
    if (!hf) throw Error("save_null_text_result: cannot open " + prefix + ".json");
    hf << header.dump(2) << "\n";

    CsvWriter csv(prefix + ".csv", {"t", "dim", "value"});
    for (size_t t = 1; t < result.null_embeddings.size(); ++t)
        for (size_t i = 0; i < result.null_embeddings[t].size(); ++i)
            csv.row({std::to_string(t), std::to_string(i),
                     fmt_double(result.null_embeddings[t][i])});

    write_video_csv(prefix + "_zT.csv", result.z_T);
}

NullTextResult load_null_text_result(const std::string& prefix) {
    std::ifstream hf(prefix + ".json");
    if (!hf) throw Error("load_null_text_result: cannot open " + prefix + ".json");
    nlohmann::json header = nlohmann::json::parse(hf);
    if (header.value("format", "") != "latentfuse-nulltext-v1")
        throw ConfigError("load_null_text_result: unrecognized format");

    NullTextResult res;
    const size_t T = header.at("timesteps").get<size_t>();
    res.null_embeddings.assign(T + 1, {});
    res.loss_before = header.at("loss_before").get<std::vector<double>>();
    res.loss_after = header.at("loss_after").get<std::vector<double>>();

    std::ifstream df(prefix + ".csv");
    if (!df) throw Error("load_null_text_result: cannot open " + prefix + ".csv");
    std::string line;
    std::getline(df, line);  // header
    while (std::getline(df, line)) {
        if (line.empty()) continue;
        const size_t c1 = line.find(',');
        const size_t c2 = line.find(',', c1 + 1);
        const size_t t = std::stoul(line.substr(0, c1));
        res.null_embeddings[t].push_back(std::stod(line.substr(c2 + 1)));
    }
    return res;
}

Pipeline::Pipeline(const ExperimentConfig& cfg)
    : cfg_(cfg),
      fingerprint_(config_fingerprint(cfg)),
      world_(build_world(cfg.world)),
      schedule_(NoiseSchedule::linear(cfg.schedule.steps, cfg.schedule.beta_start,
                                      cfg.schedule.beta_end)) {
    cfg_.validate();
    if (cfg_.edit.shared_inversion &&
        (cfg_.video_denoiser.kind == "trained" || cfg_.image_denoiser.kind == "trained"))
        throw ConfigError(
            "Pipeline: shared_inversion is only supported with analytic denoisers; trained "
            "branches need their own null-text inversion");

    auto build_branch = [&](const DenoiserSelection& sel, Denoiser::Role role,
                            std::shared_ptr<TrainedDenoiser>& trained) -> std::shared_ptr<Denoiser> {
        if (sel.kind == "analytic") {
            const double bias = role == Denoiser::Role::video ? sel.edit_bias : 0.0;
            GaussianVideoPrior prior =
                latent_prior(world_, bias, cfg_.edit.source, cfg_.edit.target);
            const auto mode = role == Denoiser::Role::video
                                  ? AnalyticGaussianDenoiser::Mode::joint
                                  : AnalyticGaussianDenoiser::Mode::marginal;
            return std::make_shared<AnalyticGaussianDenoiser>(std::move(prior), schedule_, mode);
        }

        const GuidanceSettings& gs =
            role == Denoiser::Role::video ? cfg_.guidance_video : cfg_.guidance_image;
        const bool dual = gs.image_scale.has_value();
        if (!sel.weights.empty()) {
            trained = std::make_shared<TrainedDenoiser>(
                TrainedDenoiser::load(sel.weights, schedule_.hash()));
            return trained;
        }
        TrainedDenoiserConfig mc;
        mc.role = role;
        mc.latent_dim = cfg_.world.dim;
        mc.cond_dim = world_.condition_dim();
        mc.image_cond_dim = dual ? world_.condition_dim() : 0;
        mc.hidden = cfg_.training.hidden;
        mc.init_seed = cfg_.training.seed + (role == Denoiser::Role::video ? 1 : 0);

        TrainingConfig tc;
        tc.steps = cfg_.training.steps;
        tc.learning_rate = cfg_.training.learning_rate;
        tc.seed = cfg_.training.seed + (role == Denoiser::Role::video ? 101 : 0);

        const auto dataset =
            make_training_dataset(world_, cfg_.training.videos_per_class, cfg_.training.seed, dual);
        trained = std::make_shared<TrainedDenoiser>(
            train_denoiser(dataset, schedule_, mc, tc).model);
        return trained;
    };

    video_den_ = build_branch(cfg_.video_denoiser, Denoiser::Role::video, trained_video_);
    image_den_ = build_branch(cfg_.image_denoiser, Denoiser::Role::image, trained_image_);
}

GuidanceConfig Pipeline::base_guidance(const GuidanceSettings& s) const {
    GuidanceConfig g;
    g.text_scale = s.text_scale;
    g.image_scale = s.image_scale;
    g.null_text = world_.null_condition();
    if (s.image_scale) g.null_image = world_.null_condition();
    return g;
}

Conditioning Pipeline::target_conditioning() const {
    Conditioning c;
    c.text = world_.text_condition(cfg_.edit.target);
    if (cfg_.guidance_image.image_scale) c.image = world_.text_condition(cfg_.edit.source);
    return c;
}

Conditioning Pipeline::source_conditioning() const {
    Conditioning c;
    c.text = world_.text_condition(cfg_.edit.source);
    if (cfg_.guidance_image.image_scale) c.image = world_.text_condition(cfg_.edit.source);
    return c;
}

Pipeline::Prepared Pipeline::prepare(uint64_t seed) const {
    if (cfg_.edit.source.empty() || cfg_.edit.target.empty())
        throw ConfigError("Pipeline: edit.source and edit.target must be set");

    Prepared p;
    Rng rng = Rng(seed).child(kStreamSourceVideo);
    p.source_video = world_.prior.sample(cfg_.edit.source, rng);
    p.z0 = world_.codec.encode(p.source_video);

    p.guidance_video = base_guidance(cfg_.guidance_video);
    p.guidance_image = base_guidance(cfg_.guidance_image);

    const Conditioning cond_src = source_conditioning();

    GuidanceConfig pivot = base_guidance(GuidanceSettings{});  // scale 1, no image channel

    auto invert_branch = [&](const Denoiser& den, const TrainedDenoiser* trained,
                             GuidanceConfig& guidance, NullTextResult& nt) -> VideoLatent {
        if (trained) {
            nt = null_text_invert(*trained, p.z0, cond_src, guidance, schedule_, cfg_.null_text);
            guidance.null_text_overrides = nt.null_embeddings;
            return nt.z_T;
        }
        return ddim_invert_loop(den, p.z0, cond_src, schedule_, pivot).z_T;
    };

    p.zT_video =
        invert_branch(*video_den_, trained_video_.get(), p.guidance_video, p.null_text_video);
    p.zT_image = cfg_.edit.shared_inversion
                     ? p.zT_video
                     : invert_branch(*image_den_, trained_image_.get(), p.guidance_image,
                                     p.null_text_image);
    return p;
}

MetricsReport Pipeline::score(const VideoLatent& decoded, uint64_t seed) const {
    const auto feats = world_.embedder.embed_frames(decoded);
    MetricsReport r;
    r.frame_consistency = frame_consistency(feats);
    r.textual_alignment = textual_alignment(feats, world_.text_anchor(cfg_.edit.target));
    r.n_frames = decoded.frames;
    r.seed = seed;
    r.config_fingerprint = fingerprint_;
    return r;
}

Pipeline::EditOutcome Pipeline::run_edit(uint64_t seed, const FusionConfig& fusion) const {
    Prepared p = prepare(seed);
    FusedEditResult fe =
        fused_edit(*video_den_, *image_den_, p.zT_video, p.zT_image, target_conditioning(),
                   p.guidance_video, p.guidance_image, schedule_, fusion);
    EditOutcome out;
    out.source_video = p.source_video;
    out.edited_video = world_.codec.decode(fe.z0);
    out.metrics = score(out.edited_video, seed);
    out.trace = std::move(fe.trace);
    out.null_text_video = std::move(p.null_text_video);
    out.null_text_image = std::move(p.null_text_image);
    return out;
}

Pipeline::BranchOutcome Pipeline::run_branch(uint64_t seed, Denoiser::Role role) const {
    const Prepared p = prepare(seed);
    const bool video = role == Denoiser::Role::video;
    const SampleResult s =
        ddim_sample_loop(video ? *video_den_ : *image_den_, video ? p.zT_video : p.zT_image,
                         target_conditioning(), video ? p.guidance_video : p.guidance_image,
                         schedule_);
    BranchOutcome out;
    out.video = world_.codec.decode(s.z0);
    out.metrics = score(out.video, seed);
    return out;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

void write_run_json(const std::string& out_dir, const std::string& command,
                    const ExperimentConfig& cfg, const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["config_fingerprint"] = config_fingerprint(cfg);
    j["outputs"] = outputs;
    j["seeds"] = cfg.seeds;
    std::ofstream f(out_dir + "/run.json");
    if (!f) throw Error("cannot write " + out_dir + "/run.json");
    f << j.dump(2) << "\n";
}

struct CellResult {
    bool ok = false;
    std::string error;
    MetricsReport metrics;
    int fused_steps = 0;
    double first_fusion_divergence = 0.0;
};

}  // namespace

void cmd_edit(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
    Pipeline pipe(cfg);
    ensure_dir(out_dir);

    const auto& seeds = cfg.seeds;
    std::vector<Pipeline::EditOutcome> outcomes(seeds.size());
    parallel_for(static_cast<int>(seeds.size()), jobs,
                 [&](int i) { outcomes[i] = pipe.run_edit(seeds[i], cfg.fusion_config()); });

    std::vector<std::string> outputs;
    CsvWriter metrics_csv(out_dir + "/metrics.csv",
                          {"seed", "frame_consistency", "textual_alignment", "n_frames",
                           "config_fingerprint"});
    outputs.push_back("metrics.csv");
    for (size_t i = 0; i < seeds.size(); ++i) {
        const auto& o = outcomes[i];
        metrics_csv.row({std::to_string(seeds[i]), fmt_double(o.metrics.frame_consistency),
                         fmt_double(o.metrics.textual_alignment), std::to_string(o.metrics.n_frames),
                         o.metrics.config_fingerprint});
        const std::string suffix = "_seed" + std::to_string(seeds[i]) + ".csv";
        write_video_csv(out_dir + "/source_video" + suffix, o.source_video);
        write_video_csv(out_dir + "/edited_video" + suffix, o.edited_video);
        write_trace_csv(out_dir + "/fusion_trace" + suffix, o.trace);
        outputs.push_back("edited_video" + suffix);
        outputs.push_back("fusion_trace" + suffix);
        const std::string seed_tag = "_seed" + std::to_string(seeds[i]);
        if (!o.null_text_video.null_embeddings.empty()) {
            save_null_text_result(out_dir + "/null_text_video" + seed_tag, o.null_text_video);
            outputs.push_back("null_text_video" + seed_tag + ".json");
        }
        if (!o.null_text_image.null_embeddings.empty()) {
            save_null_text_result(out_dir + "/null_text_image" + seed_tag, o.null_text_image);
            outputs.push_back("null_text_image" + seed_tag + ".json");
        }
    }
    write_run_json(out_dir, "edit", cfg, outputs);
}

void cmd_sweep_alpha(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
    if (cfg.sweep.alphas.empty()) throw ConfigError("sweep-alpha: alpha grid must be non-empty");
    Pipeline pipe(cfg);
    ensure_dir(out_dir);

    const auto& alphas = cfg.sweep.alphas;
    const auto& seeds = cfg.seeds;
    const int n = static_cast<int>(alphas.size() * seeds.size());
    std::vector<CellResult> cells(n);

    parallel_for(n, jobs, [&](int idx) {
        const double alpha = alphas[idx / seeds.size()];
        const uint64_t seed = seeds[idx % seeds.size()];
        CellResult& cell = cells[idx];
        try {
            FusionConfig fusion = cfg.fusion_config();
            fusion.alpha_tau = alpha;
            cell.metrics = pipe.run_edit(seed, fusion).metrics;
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    CsvWriter runs(out_dir + "/sweep_alpha_runs.csv",
                   {"alpha", "seed", "frame_consistency", "textual_alignment", "status", "error",
                    "config_fingerprint"});
    for (int idx = 0; idx < n; ++idx) {
        const CellResult& c = cells[idx];
        runs.row({fmt_double(alphas[idx / seeds.size()]),
                  std::to_string(seeds[idx % seeds.size()]),
                  c.ok ? fmt_double(c.metrics.frame_consistency) : std::string(),
                  c.ok ? fmt_double(c.metrics.textual_alignment) : std::string(),
                  c.ok ? "ok" : "error", c.error, pipe.fingerprint()});
    }

    CsvWriter agg(out_dir + "/sweep_alpha.csv",
                  {"alpha", "n", "frame_consistency_mean", "frame_consistency_ci_lo",
                   "frame_consistency_ci_hi", "textual_alignment_mean", "textual_alignment_ci_lo",
                   "textual_alignment_ci_hi", "config_fingerprint"});
    for (size_t a = 0; a < alphas.size(); ++a) {
        std::vector<double> fc, ta;
        for (size_t s = 0; s < seeds.size(); ++s) {
            const CellResult& c = cells[a * seeds.size() + s];
            if (!c.ok) continue;
            fc.push_back(c.metrics.frame_consistency);
            ta.push_back(c.metrics.textual_alignment);
        }
        if (fc.empty()) {
            agg.row({fmt_double(alphas[a]), "0", "", "", "", "", "", "", pipe.fingerprint()});
            continue;
        }
        const MeanCI fci = bootstrap_mean_ci(fc, cfg.bootstrap.resamples, cfg.bootstrap.seed);
        const MeanCI tci = bootstrap_mean_ci(ta, cfg.bootstrap.resamples, cfg.bootstrap.seed + 1);
        agg.row({fmt_double(alphas[a]), std::to_string(fci.n), fmt_double(fci.mean),
                 fmt_double(fci.lo), fmt_double(fci.hi), fmt_double(tci.mean), fmt_double(tci.lo),
                 fmt_double(tci.hi), pipe.fingerprint()});
    }
    write_run_json(out_dir, "sweep-alpha", cfg, {"sweep_alpha.csv", "sweep_alpha_runs.csv"});
}

void cmd_sweep_tau(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
    if (cfg.sweep.taus.empty()) throw ConfigError("sweep-tau: tau grid must be non-empty");
    Pipeline pipe(cfg);
    ensure_dir(out_dir);

    const auto& taus = cfg.sweep.taus;
    const auto& seeds = cfg.seeds;
    const int n = static_cast<int>(taus.size() * seeds.size());
    std::vector<CellResult> cells(n);

    parallel_for(n, jobs, [&](int idx) {
        const int tau = taus[idx / seeds.size()];
        const uint64_t seed = seeds[idx % seeds.size()];
        CellResult& cell = cells[idx];
        try {
            FusionConfig fusion = cfg.fusion_config();
            fusion.tau = tau;
            const auto outcome = pipe.run_edit(seed, fusion);
            cell.metrics = outcome.metrics;
            cell.fused_steps = outcome.trace.fused_count();
            for (const FusionStepRecord& s : outcome.trace.steps)
                if (s.fused) {
                    cell.first_fusion_divergence = s.divergence;
                    break;
                }
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    CsvWriter runs(out_dir + "/sweep_tau_runs.csv",
                   {"tau", "seed", "fused_steps", "first_fusion_divergence", "frame_consistency",
                    "textual_alignment", "status", "error", "config_fingerprint"});
    for (int idx = 0; idx < n; ++idx) {
        const CellResult& c = cells[idx];
        runs.row({std::to_string(taus[idx / seeds.size()]),
                  std::to_string(seeds[idx % seeds.size()]),
                  c.ok ? std::to_string(c.fused_steps) : std::string(),
                  c.ok ? fmt_double(c.first_fusion_divergence) : std::string(),
                  c.ok ? fmt_double(c.metrics.frame_consistency) : std::string(),
                  c.ok ? fmt_double(c.metrics.textual_alignment) : std::string(),
                  c.ok ? "ok" : "error", c.error, pipe.fingerprint()});
    }

    CsvWriter agg(out_dir + "/sweep_tau.csv",
                  {"tau", "fused_steps", "n", "frame_consistency_mean", "frame_consistency_ci_lo",
                   "frame_consistency_ci_hi", "textual_alignment_mean", "textual_alignment_ci_lo",
                   "textual_alignment_ci_hi", "first_fusion_divergence_mean",
                   "config_fingerprint"});
    for (size_t ti = 0; ti < taus.size(); ++ti) {
        std::vector<double> fc, ta, div;
        int fused_steps = 0;
        for (size_t s = 0; s < seeds.size(); ++s) {
            const CellResult& c = cells[ti * seeds.size() + s];
            if (!c.ok) continue;
            fc.push_back(c.metrics.frame_consistency);
            ta.push_back(c.metrics.textual_alignment);
            div.push_back(c.first_fusion_divergence);
            fused_steps = c.fused_steps;
        }
        if (fc.empty()) {
            agg.row({std::to_string(taus[ti]), "", "0", "", "", "", "", "", "", "",
                     pipe.fingerprint()});
            continue;
        }
        const MeanCI fci = bootstrap_mean_ci(fc, cfg.bootstrap.resamples, cfg.bootstrap.seed);
        const MeanCI tci = bootstrap_mean_ci(ta, cfg.bootstrap.resamples, cfg.bootstrap.seed + 1);
        agg.row({std::to_string(taus[ti]), std::to_string(fused_steps), std::to_string(fci.n),
                 fmt_double(fci.mean), fmt_double(fci.lo), fmt_double(fci.hi),
                 fmt_double(tci.mean), fmt_double(tci.lo), fmt_double(tci.hi),
                 fmt_double(mean_of(div)), pipe.fingerprint()});
    }
    write_run_json(out_dir, "sweep-tau", cfg, {"sweep_tau.csv", "sweep_tau_runs.csv"});
}

void cmd_ablate_schedule(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
    Pipeline pipe(cfg);
    ensure_dir(out_dir);

    const std::vector<std::string> modes{"fixed", "linear"};
    const auto& seeds = cfg.seeds;
    const int n = static_cast<int>(modes.size() * seeds.size());
    std::vector<CellResult> cells(n);

    parallel_for(n, jobs, [&](int idx) {
        const std::string& mode = modes[idx / seeds.size()];
        const uint64_t seed = seeds[idx % seeds.size()];
        CellResult& cell = cells[idx];
        try {
            FusionConfig fusion = cfg.fusion_config();
            fusion.mode = mode == "fixed" ? AlphaMode::fixed : AlphaMode::linear_to_one;
            cell.metrics = pipe.run_edit(seed, fusion).metrics;
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    CsvWriter runs(out_dir + "/ablate_schedule_runs.csv",
                   {"mode", "seed", "frame_consistency", "textual_alignment", "status", "error",
                    "config_fingerprint"});
    for (int idx = 0; idx < n; ++idx) {
        const CellResult& c = cells[idx];
        runs.row({modes[idx / seeds.size()], std::to_string(seeds[idx % seeds.size()]),
                  c.ok ? fmt_double(c.metrics.frame_consistency) : std::string(),
                  c.ok ? fmt_double(c.metrics.textual_alignment) : std::string(),
                  c.ok ? "ok" : "error", c.error, pipe.fingerprint()});
    }

    CsvWriter agg(out_dir + "/ablate_schedule.csv",
                  {"mode", "n", "frame_consistency_mean", "frame_consistency_ci_lo",
                   "frame_consistency_ci_hi", "textual_alignment_mean", "textual_alignment_ci_lo",
                   "textual_alignment_ci_hi", "config_fingerprint"});
    for (size_t m = 0; m < modes.size(); ++m) {
        std::vector<double> fc, ta;
        for (size_t s = 0; s < seeds.size(); ++s) {
            const CellResult& c = cells[m * seeds.size() + s];
            if (!c.ok) continue;
            fc.push_back(c.metrics.frame_consistency);
            ta.push_back(c.metrics.textual_alignment);
        }
        if (fc.empty()) {
            agg.row({modes[m], "0", "", "", "", "", "", "", pipe.fingerprint()});
            continue;
        }
        const MeanCI fci = bootstrap_mean_ci(fc, cfg.bootstrap.resamples, cfg.bootstrap.seed);
        const MeanCI tci = bootstrap_mean_ci(ta, cfg.bootstrap.resamples, cfg.bootstrap.seed + 1);
        agg.row({modes[m], std::to_string(fci.n), fmt_double(fci.mean), fmt_double(fci.lo),
                 fmt_double(fci.hi), fmt_double(tci.mean), fmt_double(tci.lo), fmt_double(tci.hi),
                 pipe.fingerprint()});
    }
    write_run_json(out_dir, "ablate-schedule", cfg,
                   {"ablate_schedule.csv", "ablate_schedule_runs.csv"});
}

void cmd_baselines(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
    Pipeline pipe(cfg);
    ensure_dir(out_dir);

    const auto& seeds = cfg.seeds;
    struct Row {
        MetricsReport video_only, image_only, fused;
    };
    std::vector<Row> rows(seeds.size());
    parallel_for(static_cast<int>(seeds.size()), jobs, [&](int i) {
        rows[i].video_only = pipe.run_branch(seeds[i], Denoiser::Role::video).metrics;
        rows[i].image_only = pipe.run_branch(seeds[i], Denoiser::Role::image).metrics;
        rows[i].fused = pipe.run_edit(seeds[i], cfg.fusion_config()).metrics;
    });

    CsvWriter csv(out_dir + "/baselines.csv",
                  {"method", "seed", "frame_consistency", "textual_alignment",
                   "config_fingerprint"});
    auto emit = [&](const char* method, uint64_t seed, const MetricsReport& m) {
        csv.row({method, std::to_string(seed), fmt_double(m.frame_consistency),
                 fmt_double(m.textual_alignment), m.config_fingerprint});
    };
    for (size_t i = 0; i < seeds.size(); ++i) {
        emit("video-only", seeds[i], rows[i].video_only);
        emit("image-only", seeds[i], rows[i].image_only);
        emit("fused", seeds[i], rows[i].fused);
    }
    write_run_json(out_dir, "baselines", cfg, {"baselines.csv"});
}

void cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.video_denoiser.kind != "trained" && cfg.image_denoiser.kind != "trained")
        throw ConfigError("train: no denoiser is configured as trained");
    World world = build_world(cfg.world);
    NoiseSchedule schedule =
        NoiseSchedule::linear(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    ensure_dir(out_dir);

    nlohmann::json summary;
    summary["config_fingerprint"] = config_fingerprint(cfg);

    auto train_role = [&](Denoiser::Role role, const std::string& name,
                          const GuidanceSettings& gs) {
        const bool dual = gs.image_scale.has_value();
        TrainedDenoiserConfig mc;
        mc.role = role;
        mc.latent_dim = cfg.world.dim;
        mc.cond_dim = world.condition_dim();
        mc.image_cond_dim = dual ? world.condition_dim() : 0;
        mc.hidden = cfg.training.hidden;
        mc.init_seed = cfg.training.seed + (role == Denoiser::Role::video ? 1 : 0);
        TrainingConfig tc;
        tc.steps = cfg.training.steps;
        tc.learning_rate = cfg.training.learning_rate;
        tc.seed = cfg.training.seed + (role == Denoiser::Role::video ? 101 : 0);

        const auto dataset =
            make_training_dataset(world, cfg.training.videos_per_class, cfg.training.seed, dual);
        TrainingRun run = train_denoiser(dataset, schedule, mc, tc);
        run.model.save(out_dir + "/weights_" + name, schedule.hash());

        CsvWriter log(out_dir + "/training_log_" + name + ".csv", {"step", "loss"});
        for (size_t i = 0; i < run.loss_history.size(); ++i)
            log.row({std::to_string(i), fmt_double(run.loss_history[i])});

        const auto heldout = make_training_dataset(world, 16, cfg.training.seed + 7919, dual);
        summary["heldout_mse_" + name] = heldout_eps_mse(run.model, heldout, schedule,
                                                         cfg.training.seed + 13);
    };

    if (cfg.video_denoiser.kind == "trained")
        train_role(Denoiser::Role::video, "video", cfg.guidance_video);
    if (cfg.image_denoiser.kind == "trained")
        train_role(Denoiser::Role::image, "image", cfg.guidance_image);

    std::ofstream f(out_dir + "/training_summary.json");
    if (!f) throw Error("cannot write training_summary.json");
    f << summary.dump(2) << "\n";
    write_run_json(out_dir, "train", cfg, {"training_summary.json"});
}

}  // namespace latentfuse
