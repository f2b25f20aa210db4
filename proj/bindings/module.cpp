#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "latentfuse/harness.hpp"

namespace py = pybind11;
using namespace latentfuse;

namespace {

VideoLatent to_latent(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D (frames x dim) array");
    VideoLatent v(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), v.v.begin());
    return v;
}

py::array_t<double> from_latent(const VideoLatent& v) {
    py::array_t<double> a({v.frames, v.dim});
    std::copy(v.v.begin(), v.v.end(), a.mutable_data());
    return a;
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["frame_consistency"] = m.frame_consistency;
    d["textual_alignment"] = m.textual_alignment;
    d["n_frames"] = m.n_frames;
    d["seed"] = m.seed;
    d["config_fingerprint"] = m.config_fingerprint;
    return d;
}

}  // namespace

PYBIND11_MODULE(_latentfuse, m) {
    m.doc() = "Latent-fusion diffusion engine: DDIM sampling/inversion, two-branch "
              "latent fusion, and the toy experiment harness.";

    py::register_exception<ConfigError>(m, "ConfigError");

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_static("linear", &NoiseSchedule::linear, py::arg("steps"), py::arg("beta_start"),
                    py::arg("beta_end"))
        .def_property_readonly("steps", &NoiseSchedule::steps)
        .def("beta", &NoiseSchedule::beta, py::arg("t"))
        .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"))
        .def_property_readonly("alpha_bars", &NoiseSchedule::alpha_bars)
        .def_property_readonly("betas", &NoiseSchedule::betas);

    m.def(
        "ddim_sample_step",
        [](py::array_t<double> z, py::array_t<double> eps, int t, const NoiseSchedule& s) {
            return from_latent(ddim_sample_step(to_latent(z), to_latent(eps), t, s));
        },
        py::arg("z_t"), py::arg("eps_hat"), py::arg("t"), py::arg("schedule"));

    m.def(
        "ddim_invert_step",
        [](py::array_t<double> z, py::array_t<double> eps, int t, const NoiseSchedule& s) {
            return from_latent(ddim_invert_step(to_latent(z), to_latent(eps), t, s));
        },
        py::arg("z_prev"), py::arg("eps_hat"), py::arg("t"), py::arg("schedule"));

    m.def(
        "fuse_latents",
        [](py::array_t<double> zv, py::array_t<double> zi, double alpha) {
            return from_latent(fuse_latents(to_latent(zv), to_latent(zi), alpha));
        },
        py::arg("z_video"), py::arg("z_image"), py::arg("alpha"));

    m.def("next_alpha", &next_alpha, py::arg("alpha_t"), py::arg("alpha_tau"),
          py::arg("total_steps"), py::arg("tau"));

    m.def("frame_consistency", &frame_consistency, py::arg("frame_features"));
    m.def("textual_alignment", &textual_alignment, py::arg("frame_features"),
          py::arg("text_feature"));

    m.def(
        "config_fingerprint",
        [](const std::string& json_text) { return config_fingerprint(parse_config(json_text)); },
        py::arg("config_json"));

    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init([](const std::string& json_text) {
                 return new Pipeline(parse_config(json_text));
             }),
             py::arg("config_json"))
        .def_property_readonly("fingerprint", &Pipeline::fingerprint)
        .def(
            "run_edit",
            [](const Pipeline& p, uint64_t seed) {
                const auto out = p.run_edit(seed, p.config().fusion_config());
                py::dict d;
                d["edited_video"] = from_latent(out.edited_video);
                d["source_video"] = from_latent(out.source_video);
                d["metrics"] = metrics_dict(out.metrics);
                d["fused_steps"] = out.trace.fused_count();
                return d;
            },
            py::arg("seed"))
        .def(
            "run_branch",
            [](const Pipeline& p, uint64_t seed, const std::string& role) {
                if (role != "video" && role != "image")
                    throw ConfigError("role must be 'video' or 'image'");
                const auto out = p.run_branch(
                    seed, role == "video" ? Denoiser::Role::video : Denoiser::Role::image);
                py::dict d;
                d["video"] = from_latent(out.video);
                d["metrics"] = metrics_dict(out.metrics);
                return d;
            },
            py::arg("seed"), py::arg("role"));
}
