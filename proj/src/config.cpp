#include "latentfuse/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace latentfuse {

using nlohmann::json;

namespace {

json class_to_json(const ClassSpec& c) {
    return json{{"label", c.label}, {"mean", c.mean}, {"sigma", c.sigma}, {"drift", c.drift}};
}

ClassSpec class_from_json(const json& j) {
    ClassSpec c;
    c.label = j.at("label").get<std::string>();
    c.mean = j.at("mean").get<std::vector<double>>();
    c.sigma = j.value("sigma", 1.0);
    c.drift = j.value("drift", std::vector<double>(c.mean.size(), 0.0));
    return c;
}

DenoiserSelection denoiser_from_json(const json& j) {
    DenoiserSelection d;
    d.kind = j.value("kind", "analytic");
    d.edit_bias = j.value("edit_bias", 0.0);
    d.weights = j.value("weights", "");
    return d;
}

json denoiser_to_json(const DenoiserSelection& d) {
    return json{{"kind", d.kind}, {"edit_bias", d.edit_bias}, {"weights", d.weights}};
}

GuidanceSettings guidance_from_json(const json& j) {
    GuidanceSettings g;
    g.text_scale = j.value("text_scale", 1.0);
    if (j.contains("image_scale") && !j.at("image_scale").is_null())
        g.image_scale = j.at("image_scale").get<double>();
    return g;
}

json guidance_to_json(const GuidanceSettings& g) {
    json j{{"text_scale", g.text_scale}};
    if (g.image_scale)
        j["image_scale"] = *g.image_scale;
    else
        j["image_scale"] = nullptr;
    return j;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: JSON parse failure: ") + e.what());
    }

    ExperimentConfig cfg;
    try {
        if (j.contains("world")) {
            const json& w = j.at("world");
            cfg.world.dim = w.value("dim", 4);
            cfg.world.frames = w.value("frames", 8);
            cfg.world.rho = w.value("rho", 0.9);
            if (w.contains("classes"))
                for (const json& c : w.at("classes")) cfg.world.classes.push_back(class_from_json(c));
            if (w.contains("codec")) {
                cfg.world.codec.kind = w.at("codec").value("kind", "identity");
                cfg.world.codec.seed = w.at("codec").value("seed", uint64_t{11});
            }
            if (w.contains("embedder")) {
                cfg.world.embedder.kind = w.at("embedder").value("kind", "identity");
                cfg.world.embedder.embed_dim = w.at("embedder").value("embed_dim", cfg.world.dim);
                cfg.world.embedder.seed = w.at("embedder").value("seed", uint64_t{7});
            } else {
                cfg.world.embedder.embed_dim = cfg.world.dim;
            }
            cfg.world.condition_dim = w.value("condition_dim", 16);
            cfg.world.condition_seed = w.value("condition_seed", uint64_t{19});
        }
        if (j.contains("schedule")) {
            cfg.schedule.steps = j.at("schedule").value("steps", 50);
            cfg.schedule.beta_start = j.at("schedule").value("beta_start", 1e-4);
            cfg.schedule.beta_end = j.at("schedule").value("beta_end", 0.02);
        }
        if (j.contains("denoisers")) {
            if (j.at("denoisers").contains("video"))
                cfg.video_denoiser = denoiser_from_json(j.at("denoisers").at("video"));
            if (j.at("denoisers").contains("image"))
                cfg.image_denoiser = denoiser_from_json(j.at("denoisers").at("image"));
        }
        if (j.contains("guidance")) {
            if (j.at("guidance").contains("video"))
                cfg.guidance_video = guidance_from_json(j.at("guidance").at("video"));
            if (j.at("guidance").contains("image"))
                cfg.guidance_image = guidance_from_json(j.at("guidance").at("image"));
        }
        if (j.contains("edit")) {
            cfg.edit.source = j.at("edit").value("source", "");
            cfg.edit.target = j.at("edit").value("target", "");
            cfg.edit.shared_inversion = j.at("edit").value("shared_inversion", false);
        }
        if (j.contains("fusion")) {
            cfg.fusion.tau = j.at("fusion").value("tau", 25);
            cfg.fusion.alpha_tau = j.at("fusion").value("alpha_tau", 0.6);
            cfg.fusion.mode = j.at("fusion").value("mode", "linear");
        }
        bool taus_given = false;
        if (j.contains("sweep")) {
            if (j.at("sweep").contains("alphas"))
                cfg.sweep.alphas = j.at("sweep").at("alphas").get<std::vector<double>>();
            if (j.at("sweep").contains("taus")) {
                cfg.sweep.taus = j.at("sweep").at("taus").get<std::vector<int>>();
                taus_given = true;
            }
        }
        if (!taus_given) {
            // quartile grid over [0, T] for whatever schedule was configured
            const int T = cfg.schedule.steps;
            cfg.sweep.taus.clear();
            for (int tau : {0, T / 4, T / 2, 3 * T / 4, T})
                if (cfg.sweep.taus.empty() || cfg.sweep.taus.back() != tau)
                    cfg.sweep.taus.push_back(tau);
        }
        if (j.contains("null_text")) {
            cfg.null_text.inner_steps = j.at("null_text").value("inner_steps", 10);
            cfg.null_text.step_size = j.at("null_text").value("step_size", 1e-2);
        }
        if (j.contains("training")) {
            cfg.training.steps = j.at("training").value("steps", long{40000});
            cfg.training.learning_rate = j.at("training").value("learning_rate", 0.02);
            cfg.training.hidden = j.at("training").value("hidden", 48);
            cfg.training.videos_per_class = j.at("training").value("videos_per_class", 64);
            cfg.training.seed = j.at("training").value("seed", uint64_t{5});
        }
        if (j.contains("bootstrap")) {
            cfg.bootstrap.resamples = j.at("bootstrap").value("resamples", 2000);
            cfg.bootstrap.seed = j.at("bootstrap").value("seed", uint64_t{99});
        }
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad field: ") + e.what());
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void ExperimentConfig::validate() const {
    if (world.classes.empty()) throw ConfigError("config: world.classes must be non-empty");
    std::set<std::string> labels;
    for (const ClassSpec& c : world.classes) {
        if (static_cast<int>(c.mean.size()) != world.dim)
            throw ConfigError("config: class " + c.label + " mean has wrong dimension");
        if (static_cast<int>(c.drift.size()) != world.dim)
            throw ConfigError("config: class " + c.label + " drift has wrong dimension");
        if (!(c.sigma > 0.0)) throw ConfigError("config: class " + c.label + " sigma must be > 0");
        if (!labels.insert(c.label).second)
            throw ConfigError("config: duplicate class label " + c.label);
    }
    if (!(world.rho >= 0.0 && world.rho < 1.0))
        throw ConfigError("config: world.rho must be in [0, 1)");
    if (world.codec.kind != "identity" && world.codec.kind != "random")
        throw ConfigError("config: codec.kind must be identity or random");
    if (world.embedder.kind != "identity" && world.embedder.kind != "random")
        throw ConfigError("config: embedder.kind must be identity or random");
    if (world.condition_dim < static_cast<int>(world.classes.size()))
        throw ConfigError("config: condition_dim must be >= the number of classes");

    if (schedule.steps < 1) throw ConfigError("config: schedule.steps must be >= 1");
    if (!(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end &&
          schedule.beta_end < 1.0))
        throw ConfigError("config: need 0 < beta_start <= beta_end < 1");

    for (const DenoiserSelection* d : {&video_denoiser, &image_denoiser})
        if (d->kind != "analytic" && d->kind != "trained")
            throw ConfigError("config: denoiser kind must be analytic or trained");

    if (!edit.source.empty() && !labels.count(edit.source))
        throw ConfigError("config: edit.source class '" + edit.source + "' is not a world class");
    if (!edit.target.empty() && !labels.count(edit.target))
        throw ConfigError("config: edit.target class '" + edit.target + "' is not a world class");

    if (fusion.mode != "linear" && fusion.mode != "fixed")
        throw ConfigError("config: fusion.mode must be linear or fixed");
    fusion_config().validate();
    for (double a : sweep.alphas)
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("config: sweep alpha out of [0, 1]");
    for (int t : sweep.taus)
        if (t < 0 || t > schedule.steps)
            throw ConfigError("config: sweep tau out of [0, T]");
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (bootstrap.resamples < 1) throw ConfigError("config: bootstrap.resamples must be >= 1");
}

FusionConfig ExperimentConfig::fusion_config() const {
    FusionConfig f;
    f.total_steps = schedule.steps;
    f.tau = fusion.tau;
    f.alpha_tau = fusion.alpha_tau;
    f.mode = alpha_mode();
    return f;
}

AlphaMode ExperimentConfig::alpha_mode() const {
    return fusion.mode == "fixed" ? AlphaMode::fixed : AlphaMode::linear_to_one;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json classes = json::array();
    for (const ClassSpec& c : cfg.world.classes) classes.push_back(class_to_json(c));

    json j{
        {"world",
         {{"dim", cfg.world.dim},
          {"frames", cfg.world.frames},
          {"rho", cfg.world.rho},
          {"classes", classes},
          {"codec", {{"kind", cfg.world.codec.kind}, {"seed", cfg.world.codec.seed}}},
          {"embedder",
           {{"kind", cfg.world.embedder.kind},
            {"embed_dim", cfg.world.embedder.embed_dim},
            {"seed", cfg.world.embedder.seed}}},
          {"condition_dim", cfg.world.condition_dim},
          {"condition_seed", cfg.world.condition_seed}}},
        {"schedule",
         {{"steps", cfg.schedule.steps},
          {"beta_start", cfg.schedule.beta_start},
          {"beta_end", cfg.schedule.beta_end}}},
        {"denoisers",
         {{"video", denoiser_to_json(cfg.video_denoiser)},
          {"image", denoiser_to_json(cfg.image_denoiser)}}},
        {"guidance",
         {{"video", guidance_to_json(cfg.guidance_video)},
          {"image", guidance_to_json(cfg.guidance_image)}}},
        {"edit",
         {{"source", cfg.edit.source},
          {"target", cfg.edit.target},
          {"shared_inversion", cfg.edit.shared_inversion}}},
        {"fusion",
         {{"tau", cfg.fusion.tau}, {"alpha_tau", cfg.fusion.alpha_tau}, {"mode", cfg.fusion.mode}}},
        {"sweep", {{"alphas", cfg.sweep.alphas}, {"taus", cfg.sweep.taus}}},
        {"null_text",
         {{"inner_steps", cfg.null_text.inner_steps}, {"step_size", cfg.null_text.step_size}}},
        {"training",
         {{"steps", cfg.training.steps},
          {"learning_rate", cfg.training.learning_rate},
          {"hidden", cfg.training.hidden},
          {"videos_per_class", cfg.training.videos_per_class},
          {"seed", cfg.training.seed}}},
        {"bootstrap", {{"resamples", cfg.bootstrap.resamples}, {"seed", cfg.bootstrap.seed}}},
        {"seeds", cfg.seeds},
    };
    return j.dump(2);
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
    const std::string canon = config_to_json(cfg);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace latentfuse
