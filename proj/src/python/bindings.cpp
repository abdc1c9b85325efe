// Python bindings for the core operations: data generation, the latent codec,
// clip planning/fusion, model configuration, metrics, and end-to-end inpainting.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ditpaint/metrics.hpp"
#include "ditpaint/multidiffusion.hpp"
#include "ditpaint/pipeline.hpp"
#include "ditpaint/selftest.hpp"

namespace py = pybind11;
using namespace ditpaint;

namespace {

Tensor<float> to_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    std::vector<size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<size_t>(a.shape(i));
    Tensor<float> t(shape);
    std::copy(a.data(), a.data() + t.size(), t.data());
    return t;
}

py::array_t<float> to_array(const Tensor<float>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> a(shape);
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "DiT-based video inpainting core (flow matching + temporal sliding-window fusion)";

    py::enum_<MaskKind>(m, "MaskKind")
        .value("STATIONARY", MaskKind::Stationary)
        .value("MOVING", MaskKind::Moving);

    py::class_<MaskSpec>(m, "MaskSpec")
        .def(py::init<>())
        .def_readwrite("kind", &MaskSpec::kind)
        .def_readwrite("count", &MaskSpec::count)
        .def_readwrite("min_area", &MaskSpec::min_area)
        .def_readwrite("max_area", &MaskSpec::max_area)
        .def_readwrite("drift", &MaskSpec::drift)
        .def_readwrite("seed", &MaskSpec::seed);

    py::enum_<OutputMode>(m, "OutputMode")
        .value("VELOCITY_ONLY", OutputMode::VelocityOnly)
        .value("PAPER_2C", OutputMode::Paper2c);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("num_blocks", &ModelConfig::num_blocks)
        .def_readwrite("num_heads", &ModelConfig::num_heads)
        .def_readwrite("head_dim", &ModelConfig::head_dim)
        .def_readwrite("ffn_ratio", &ModelConfig::ffn_ratio)
        .def_readwrite("t_freq_dim", &ModelConfig::t_freq_dim)
        .def_readwrite("output_mode", &ModelConfig::output_mode)
        .def_property_readonly("embed_dim", &ModelConfig::embed_dim)
        .def_static("desk", &ModelConfig::desk)
        .def_static("paper", &ModelConfig::paper);
    m.def("param_count", &param_count, py::arg("config"));

    py::class_<ClipPlan>(m, "ClipPlan")
        .def_readonly("total", &ClipPlan::total)
        .def_readonly("window", &ClipPlan::window)
        .def_readonly("stride", &ClipPlan::stride)
        .def_readonly("starts", &ClipPlan::starts);
    m.def("plan_clips", &plan_clips, py::arg("n_total"), py::arg("window"), py::arg("stride"));
    m.def(
        "fuse_step",
        [](const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& clips,
           const ClipPlan& plan) {
            std::vector<Tensor<float>> ts;
            ts.reserve(clips.size());
            for (const auto& c : clips) ts.push_back(to_tensor(c));
            return to_array(fuse_step(ts, plan));
        },
        py::arg("clips"), py::arg("plan"));

    m.def(
        "gen_video",
        [](size_t H, size_t W, size_t N, int objects, uint64_t seed) {
            RngStream rng(seed, 0);
            return to_array(gen_synthetic_video(rng, H, W, N, objects));
        },
        py::arg("height"), py::arg("width"), py::arg("frames"), py::arg("objects") = 2,
        py::arg("seed") = 0);
    m.def(
        "gen_masks",
        [](size_t H, size_t W, size_t N, const MaskSpec& spec, uint64_t seed) {
            RngStream rng(seed, 0);
            return to_array(gen_masks(rng, H, W, N, spec));
        },
        py::arg("height"), py::arg("width"), py::arg("frames"), py::arg("spec"),
        py::arg("seed") = 0);
    m.def(
        "apply_mask",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& video,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& mask) {
            return to_array(apply_mask(to_tensor(video), to_tensor(mask)));
        },
        py::arg("video"), py::arg("mask"));

    m.def(
        "encode",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& video) {
            return to_array(encode(to_tensor(video)));
        },
        py::arg("video"));
    m.def(
        "decode",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& latent) {
            return to_array(decode(to_tensor(latent)));
        },
        py::arg("latent"));
    m.def(
        "downsample_mask",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& mask) {
            return to_array(downsample_mask(to_tensor(mask)));
        },
        py::arg("mask"));

    m.def(
        "psnr",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& gt) {
            return psnr(to_tensor(pred), to_tensor(gt));
        },
        py::arg("pred"), py::arg("gt"));
    m.def(
        "ssim",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& gt) {
            return ssim(to_tensor(pred), to_tensor(gt));
        },
        py::arg("pred"), py::arg("gt"));

    m.def("read_frames",
          [](const std::filesystem::path& dir) { return to_array(read_frames(dir)); });
    m.def("write_frames",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& video,
             const std::filesystem::path& dir) { write_frames(to_tensor(video), dir); });
    m.def("read_masks", [](const std::filesystem::path& dir) { return to_array(read_masks(dir)); });
    m.def("write_masks",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& mask,
             const std::filesystem::path& dir) { write_masks(to_tensor(mask), dir); });

    m.def(
        "model_forward",
        [](const ModelConfig& cfg, uint64_t seed,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& x_t,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& y,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& mask, float t) {
            RngStream rng(seed, 0xd17);
            const auto params = init_params<float>(cfg, rng);
            return to_array(
                model_forward<float>(params, cfg, to_tensor(x_t), to_tensor(y), to_tensor(mask), t));
        },
        py::arg("config"), py::arg("seed"), py::arg("x_t"), py::arg("y"), py::arg("mask"),
        py::arg("t"), "Velocity prediction with freshly initialized parameters (seeded).");

    m.def(
        "inpaint",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& video,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& mask,
           const std::filesystem::path& ckpt_path, int steps, size_t window, size_t stride,
           uint64_t seed) {
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            InpaintOptions opts;
            opts.steps = steps;
            opts.window = window;
            opts.stride = stride;
            opts.seed = seed;
            return to_array(inpaint_video(to_tensor(video), to_tensor(mask), ckpt, opts));
        },
        py::arg("video"), py::arg("mask"), py::arg("checkpoint"), py::arg("steps") = 4,
        py::arg("window") = 0, py::arg("stride") = 0, py::arg("seed") = 0);

    m.def("selftest", [] {
        py::dict out;
        for (const auto& c : selftest_cases()) out[py::str(c.name)] = c.run();
        return out;
    });
}
